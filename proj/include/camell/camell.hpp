#pragma once

// Convenience header pulling in the whole library.

#include "camell/acquisition.hpp"
#include "camell/confidence.hpp"
#include "camell/config.hpp"
#include "camell/data.hpp"
#include "camell/io.hpp"
#include "camell/learner.hpp"
#include "camell/loop.hpp"
#include "camell/metrics.hpp"
#include "camell/noisygen.hpp"
#include "camell/rng.hpp"
#include "camell/schema.hpp"
#include "camell/synth.hpp"
