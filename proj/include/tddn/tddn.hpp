#pragma once

#include "tddn/cmapss.hpp"
#include "tddn/checkpoint.hpp"
#include "tddn/error.hpp"
#include "tddn/evaluate.hpp"
#include "tddn/layers.hpp"
#include "tddn/metrics.hpp"
#include "tddn/model.hpp"
#include "tddn/preprocess.hpp"
#include "tddn/tensor.hpp"
#include "tddn/training.hpp"
