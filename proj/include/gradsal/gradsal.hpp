#pragma once

#include "gradsal/numerics.hpp"
#include "gradsal/models.hpp"
#include "gradsal/checkpoint.hpp"
#include "gradsal/synthdata.hpp"
#include "gradsal/training.hpp"
#include "gradsal/saliency.hpp"
#include "gradsal/evaluation.hpp"
#include "gradsal/export.hpp"
#include "gradsal/config.hpp"
#include "gradsal/pipeline.hpp"
