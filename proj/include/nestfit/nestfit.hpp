#pragma once

#include "nestfit/dataprep.hpp"
#include "nestfit/dataset.hpp"
#include "nestfit/design.hpp"
#include "nestfit/error.hpp"
#include "nestfit/estimator.hpp"
#include "nestfit/kernel.hpp"
#include "nestfit/manifest.hpp"
#include "nestfit/model.hpp"
#include "nestfit/model_json.hpp"
#include "nestfit/optimizer.hpp"
#include "nestfit/report.hpp"
#include "nestfit/segment.hpp"
#include "nestfit/synthetic.hpp"
