// Umbrella header.
#pragma once

#include "baselines.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "hash.hpp"
#include "idx.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "projection.hpp"
#include "protocol.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "signal.hpp"
