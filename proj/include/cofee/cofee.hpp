#pragma once

// Umbrella header for the whole library.

#include "cofee/agents.hpp"     // IWYU pragma: export
#include "cofee/backend.hpp"    // IWYU pragma: export
#include "cofee/cli.hpp"        // IWYU pragma: export
#include "cofee/core.hpp"       // IWYU pragma: export
#include "cofee/errors.hpp"     // IWYU pragma: export
#include "cofee/evaluation.hpp" // IWYU pragma: export
#include "cofee/ingest.hpp"     // IWYU pragma: export
#include "cofee/live.hpp"       // IWYU pragma: export
#include "cofee/metrics.hpp"    // IWYU pragma: export
#include "cofee/mock.hpp"       // IWYU pragma: export
#include "cofee/synth.hpp"      // IWYU pragma: export
#include "cofee/util.hpp"       // IWYU pragma: export
