#pragma once

#include "interlace/rng.hpp"
#include "interlace/lattice.hpp"
#include "interlace/green.hpp"
#include "interlace/solvers.hpp"
#include "interlace/potential.hpp"
#include "interlace/graph.hpp"
#include "interlace/sampler.hpp"
#include "interlace/stats.hpp"
#include "interlace/trajcap.hpp"
#include "interlace/connectivity.hpp"
#include "interlace/flow.hpp"
