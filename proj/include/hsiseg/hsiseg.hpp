#pragma once

#include "hsiseg/band_select.hpp"
#include "hsiseg/baselines.hpp"
#include "hsiseg/config.hpp"
#include "hsiseg/cube.hpp"
#include "hsiseg/error.hpp"
#include "hsiseg/layers.hpp"
#include "hsiseg/metrics.hpp"
#include "hsiseg/model.hpp"
#include "hsiseg/models.hpp"
#include "hsiseg/pipeline.hpp"
#include "hsiseg/ranker.hpp"
#include "hsiseg/train.hpp"
#include "hsiseg/weight_io.hpp"
