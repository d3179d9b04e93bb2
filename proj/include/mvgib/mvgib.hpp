#pragma once

#include "mvgib/bounds.hpp"
#include "mvgib/checkpoint.hpp"
#include "mvgib/config.hpp"
#include "mvgib/error.hpp"
#include "mvgib/evaluation.hpp"
#include "mvgib/experiment.hpp"
#include "mvgib/graph.hpp"
#include "mvgib/log.hpp"
#include "mvgib/models.hpp"
#include "mvgib/nn.hpp"
#include "mvgib/objectives.hpp"
#include "mvgib/seed.hpp"
#include "mvgib/trainer.hpp"
#include "mvgib/tu_dataset.hpp"
#include "mvgib/views.hpp"
