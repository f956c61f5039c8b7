#pragma once

#include "effbound/errors.hpp"
#include "effbound/core.hpp"
#include "effbound/propensity.hpp"
#include "effbound/dgp.hpp"
#include "effbound/moments.hpp"
#include "effbound/linalg.hpp"
#include "effbound/bounds.hpp"
#include "effbound/parallel.hpp"
#include "effbound/asymptotics.hpp"
#include "effbound/simulate.hpp"
#include "effbound/io.hpp"
