#pragma once

#include "oodkit/clustering.hpp"
#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/evaluation.hpp"
#include "oodkit/format.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/model_io.hpp"
#include "oodkit/parallel.hpp"
#include "oodkit/quality.hpp"
#include "oodkit/rng.hpp"
#include "oodkit/scoring.hpp"
