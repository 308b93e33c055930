#pragma once

#include "satae/analysis.hpp"
#include "satae/data.hpp"
#include "satae/errors.hpp"
#include "satae/model.hpp"
#include "satae/nonlin.hpp"
#include "satae/train.hpp"
