#pragma once

#include "bandit.hpp"
#include "casegen.hpp"
#include "config.hpp"
#include "counterfactual.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "neural.hpp"
#include "policies.hpp"
#include "random.hpp"
#include "report.hpp"
#include "sim.hpp"
#include "synth.hpp"
#include "tabular.hpp"
#include "trees.hpp"
#include "vgm.hpp"
