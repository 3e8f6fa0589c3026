#pragma once

// Umbrella header: the full inversion/editing toolkit.

#include "dik/bench.hpp"
#include "dik/denoiser.hpp"
#include "dik/grounding.hpp"
#include "dik/inversion.hpp"
#include "dik/io.hpp"
#include "dik/masking.hpp"
#include "dik/metrics.hpp"
#include "dik/refine.hpp"
#include "dik/residual_stack.hpp"
#include "dik/rng.hpp"
#include "dik/types.hpp"
