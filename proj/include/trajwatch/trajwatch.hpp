#pragma once

// Convenience umbrella: pulls in the whole library.

#include "trajwatch/common.hpp"     // IWYU pragma: export
#include "trajwatch/types.hpp"      // IWYU pragma: export
#include "trajwatch/config.hpp"     // IWYU pragma: export
#include "trajwatch/io.hpp"         // IWYU pragma: export
#include "trajwatch/condition.hpp"  // IWYU pragma: export
#include "trajwatch/predict.hpp"    // IWYU pragma: export
#include "trajwatch/anomaly.hpp"    // IWYU pragma: export
#include "trajwatch/eval.hpp"       // IWYU pragma: export
#include "trajwatch/synth.hpp"      // IWYU pragma: export
#include "trajwatch/pipeline.hpp"   // IWYU pragma: export
