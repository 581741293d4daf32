#pragma once

#include "bki/config.hpp"
#include "bki/epoch.hpp"
#include "bki/hints.hpp"
#include "bki/index.hpp"
#include "bki/keyset.hpp"
#include "bki/metrics.hpp"
#include "bki/nodes.hpp"
#include "bki/report.hpp"
#include "bki/segmentation.hpp"
#include "bki/stats.hpp"
#include "bki/synthetic.hpp"
#include "bki/workload.hpp"
