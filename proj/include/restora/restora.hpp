#pragma once

#include "restora/degradation.hpp"
#include "restora/flow.hpp"
#include "restora/gmm.hpp"
#include "restora/io.hpp"
#include "restora/metrics.hpp"
#include "restora/mlp.hpp"
#include "restora/restoration.hpp"
#include "restora/tensor.hpp"
