#pragma once

#include "cbias/align.hpp"
#include "cbias/cbm.hpp"
#include "cbias/ctc.hpp"
#include "cbias/emission.hpp"
#include "cbias/error.hpp"
#include "cbias/io.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/ngram.hpp"
#include "cbias/salm.hpp"
#include "cbias/scoring.hpp"
#include "cbias/synth.hpp"
#include "cbias/unicode.hpp"
#include "cbias/wfst.hpp"
