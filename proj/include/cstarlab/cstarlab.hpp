#pragma once

#include "cstarlab/io.hpp"
#include "cstarlab/lp.hpp"
#include "cstarlab/perturbation_sums.hpp"
#include "cstarlab/regularity.hpp"
#include "cstarlab/separation.hpp"
