#pragma once

#include "convsel/analysis.hpp"
#include "convsel/bm25.hpp"
#include "convsel/config.hpp"
#include "convsel/dense.hpp"
#include "convsel/io.hpp"
#include "convsel/joint.hpp"
#include "convsel/matrix.hpp"
#include "convsel/metrics.hpp"
#include "convsel/prl.hpp"
#include "convsel/selector.hpp"
#include "convsel/synth.hpp"
#include "convsel/tokenize.hpp"
#include "convsel/types.hpp"
