#pragma once

#include "mmqa/error.hpp"
#include "mmqa/random.hpp"
#include "mmqa/tensor.hpp"
#include "mmqa/autodiff.hpp"
#include "mmqa/text.hpp"
#include "mmqa/encoders.hpp"
#include "mmqa/data.hpp"
#include "mmqa/model.hpp"
#include "mmqa/optim.hpp"
#include "mmqa/metrics.hpp"
#include "mmqa/train.hpp"
#include "mmqa/io.hpp"
#include "mmqa/synthetic.hpp"
#include "mmqa/gradcheck.hpp"
#include "mmqa/pipeline.hpp"
