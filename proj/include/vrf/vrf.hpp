#pragma once

#include "vrf/attention.hpp"
#include "vrf/blocks.hpp"
#include "vrf/config.hpp"
#include "vrf/gradcheck.hpp"
#include "vrf/layers.hpp"
#include "vrf/manifest.hpp"
#include "vrf/nn/conv.hpp"
#include "vrf/nn/functional.hpp"
#include "vrf/ops.hpp"
#include "vrf/oracle.hpp"
#include "vrf/profiler.hpp"
#include "vrf/rng.hpp"
#include "vrf/tape.hpp"
#include "vrf/tensor.hpp"
#include "vrf/vrft.hpp"
