#pragma once

#include "semiformer/data/augment.hpp"
#include "semiformer/data/batch.hpp"
#include "semiformer/data/dataset.hpp"
#include "semiformer/data/split.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/experiment/config.hpp"
#include "semiformer/experiment/report.hpp"
#include "semiformer/experiment/run.hpp"
#include "semiformer/models/config.hpp"
#include "semiformer/models/dual_stream.hpp"
#include "semiformer/models/fusion.hpp"
#include "semiformer/models/streams.hpp"
#include "semiformer/objective/losses.hpp"
#include "semiformer/objective/pseudo_label.hpp"
#include "semiformer/objective/step.hpp"
#include "semiformer/rng.hpp"
#include "semiformer/train/checkpoint.hpp"
#include "semiformer/train/config.hpp"
#include "semiformer/train/evaluate.hpp"
#include "semiformer/train/metrics.hpp"
#include "semiformer/train/trainer.hpp"
