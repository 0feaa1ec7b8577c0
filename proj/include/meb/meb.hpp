#pragma once

#include "meb/error.hpp"
#include "meb/numeric.hpp"
#include "meb/prob.hpp"
#include "meb/cme.hpp"
#include "meb/simplex_quadrature.hpp"
#include "meb/posterior.hpp"
#include "meb/mcmc.hpp"
#include "meb/inference.hpp"
#include "meb/models/statmech.hpp"
#include "meb/models/regression.hpp"
#include "meb/models/qrse.hpp"
#include "meb/ingest.hpp"
#include "meb/records.hpp"
