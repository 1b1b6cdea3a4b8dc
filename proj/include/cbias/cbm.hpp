#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cbias/error.hpp"

namespace cbias::cbm {

using Matrix = Eigen::MatrixXd;

struct Dims {
  std::size_t d_model = 256;
  std::size_t d_c = 64;
  std::size_t m = 0;  // biased words, NULL excluded
};

/// Contextual biasing module parameters. `embed` has m+1 rows, the last one
/// is the NULL entry; it serves as both attention key and value.
struct Params {
  Dims dims;
  Matrix embed;    // (m+1) x d_c
  Matrix query;    // d_model x d_c
  Matrix output;   // d_c x d_model
  std::uint64_t seed = 0;
};

inline constexpr std::size_t param_count(std::size_t d_model, std::size_t d_c, std::size_t m) {
  return (m + 1) * d_c + d_model * d_c + d_c * d_model;
}

inline std::size_t param_count(const Dims& d) { return param_count(d.d_model, d.d_c, d.m); }

/// Uniform double in [0,1) from the top 53 bits, so streams are identical
/// across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Matrix uniform_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = lo + (hi - lo) * unit_uniform(rng);
  return out;
}

/// All parameters uniform in [-1/sqrt(d_c), 1/sqrt(d_c)].
inline Params init_params(const Dims& dims, std::uint64_t seed) {
  if (dims.d_model == 0 || dims.d_c == 0) fail(ErrorKind::DimensionMismatch, "dimensions must be positive");
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(dims.d_c));
  Params p;
  p.dims = dims;
  p.seed = seed;
  p.embed = uniform_matrix(rng, dims.m + 1, dims.d_c, -a, a);
  p.query = uniform_matrix(rng, dims.d_model, dims.d_c, -a, a);
  p.output = uniform_matrix(rng, dims.d_c, dims.d_model, -a, a);
  return p;
}

inline void check_shapes(const Params& p) {
  const auto& d = p.dims;
  auto bad = [](const Matrix& m, std::size_t r, std::size_t c) {
    return static_cast<std::size_t>(m.rows()) != r || static_cast<std::size_t>(m.cols()) != c;
  };
  if (bad(p.embed, d.m + 1, d.d_c) || bad(p.query, d.d_model, d.d_c) || bad(p.output, d.d_c, d.d_model))
    fail(ErrorKind::DimensionMismatch, "parameter shapes disagree with dims");
}

struct Forward {
  Matrix queries;    // T x d_c
  Matrix attention;  // T x (m+1)
  Matrix context;    // T x d_c, attention-weighted embeddings
  Matrix out;        // T x d_model, X + context * W_o
};

inline Matrix row_softmax(const Matrix& scores) {
  Matrix a(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    double mx = scores.row(r).maxCoeff();
    a.row(r) = (scores.row(r).array() - mx).exp().matrix();
    a.row(r) /= a.row(r).sum();
  }
  return a;
}

inline Forward forward(const Params& p, const Matrix& x) {
  check_shapes(p);
  if (static_cast<std::size_t>(x.cols()) != p.dims.d_model)
    fail(ErrorKind::DimensionMismatch, "frame block has " + std::to_string(x.cols()) + " columns, expected " +
                                           std::to_string(p.dims.d_model));
  Forward f;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dims.d_c));
  f.queries = x * p.query;
  if (x.rows() == 0) {
    f.attention = Matrix(0, p.embed.rows());
    f.context = Matrix(0, p.dims.d_c);
    f.out = Matrix(0, x.cols());
    return f;
  }
  f.attention = row_softmax(f.queries * p.embed.transpose() * scale);
  f.context = f.attention * p.embed;
  f.out = x + f.context * p.output;
  return f;
}

struct Gradients {
  Matrix embed;
  Matrix query;
  Matrix output;
};

/// Loss = sum of squares of the module output.
inline double loss(const Params& p, const Matrix& x) { return forward(p, x).out.squaredNorm(); }

inline Gradients backward(const Params& p, const Matrix& x) {
  Forward f = forward(p, x);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dims.d_c));
  Gradients g;
  if (x.rows() == 0) {
    g.embed = Matrix::Zero(p.embed.rows(), p.embed.cols());
    g.query = Matrix::Zero(p.query.rows(), p.query.cols());
    g.output = Matrix::Zero(p.output.rows(), p.output.cols());
    return g;
  }
  Matrix d_out = 2.0 * f.out;
  g.output = f.context.transpose() * d_out;
  Matrix d_context = d_out * p.output.transpose();
  Matrix d_attn = d_context * p.embed.transpose();
  // softmax Jacobian, row by row: dS = A .* (dA - <dA, A>)
  Eigen::VectorXd dots = (d_attn.array() * f.attention.array()).rowwise().sum();
  Matrix d_scores = (f.attention.array() * (d_attn.colwise() - dots).array()).matrix() * scale;
  g.embed = f.attention.transpose() * d_context + d_scores.transpose() * f.queries;
  g.query = x.transpose() * (d_scores * p.embed);
  return g;
}

inline double relative_error(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences over every parameter entry.
inline GradCheck grad_check(const Params& p, const Matrix& x, double eps) {
  if (eps < 1e-7 || eps > 1e-3) fail(ErrorKind::ConfigError, "perturbation must be in [1e-7, 1e-3]");
  const auto& d = p.dims;
  if (std::max({d.d_model, d.d_c, d.m + 1, static_cast<std::size_t>(x.rows())}) > 16)
    fail(ErrorKind::DimensionMismatch, "gradient check is limited to dimensions <= 16");
  Gradients g = backward(p, x);
  GradCheck out;
  Params work = p;
  auto sweep = [&](Matrix Params::*field, const Matrix& analytic) {
    Matrix& m = work.*field;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double orig = m(r, c);
        m(r, c) = orig + eps;
        double up = loss(work, x);
        m(r, c) = orig - eps;
        double down = loss(work, x);
        m(r, c) = orig;
        double numeric = (up - down) / (2.0 * eps);
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic(r, c), numeric));
        out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic(r, c) - numeric));
        ++out.checked;
      }
    }
  };
  sweep(&Params::embed, g.embed);
  sweep(&Params::query, g.query);
  sweep(&Params::output, g.output);
  return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  if (!j.is_array() || j.size() != rows) fail(ErrorKind::DimensionMismatch, "matrix row count mismatch");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(ErrorKind::DimensionMismatch, "matrix column count mismatch");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json to_json(const Params& p) {
  return {{"dims", {{"d_model", p.dims.d_model}, {"d_c", p.dims.d_c}, {"m", p.dims.m}}},
          {"seed", p.seed},
          {"embedding", matrix_to_json(p.embed)},
          {"query", matrix_to_json(p.query)},
          {"output", matrix_to_json(p.output)}};
}

inline Params params_from_json(const nlohmann::json& j) {
  try {
    Params p;
    p.dims.d_model = j.at("dims").at("d_model").get<std::size_t>();
    p.dims.d_c = j.at("dims").at("d_c").get<std::size_t>();
    p.dims.m = j.at("dims").at("m").get<std::size_t>();
    p.seed = j.value("seed", std::uint64_t{0});
    p.embed = matrix_from_json(j.at("embedding"), p.dims.m + 1, p.dims.d_c);
    p.query = matrix_from_json(j.at("query"), p.dims.d_model, p.dims.d_c);
    p.output = matrix_from_json(j.at("output"), p.dims.d_c, p.dims.d_model);
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("CBM params: ") + e.what());
  }
}

}  // namespace cbias::cbm
