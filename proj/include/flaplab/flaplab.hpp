#pragma once

#include "flaplab/env.hpp"
#include "flaplab/error.hpp"
#include "flaplab/fa_agents.hpp"
#include "flaplab/features.hpp"
#include "flaplab/harness.hpp"
#include "flaplab/nn/layers.hpp"
#include "flaplab/nn/network.hpp"
#include "flaplab/nn/serialize.hpp"
#include "flaplab/nn/tensor.hpp"
#include "flaplab/rng.hpp"
#include "flaplab/stats.hpp"
#include "flaplab/tabular.hpp"
