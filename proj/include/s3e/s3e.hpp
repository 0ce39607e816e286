#pragma once

#include "s3e/baselines.hpp"
#include "s3e/bench.hpp"
#include "s3e/embedding.hpp"
#include "s3e/error.hpp"
#include "s3e/grouping.hpp"
#include "s3e/matrix.hpp"
#include "s3e/sts_eval.hpp"
#include "s3e/tokenizer.hpp"
#include "s3e/vectors_io.hpp"
#include "s3e/weighting.hpp"
