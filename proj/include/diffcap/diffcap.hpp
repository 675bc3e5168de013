#pragma once

#include "diffcap/attack.hpp"
#include "diffcap/calibrate.hpp"
#include "diffcap/certify.hpp"
#include "diffcap/config.hpp"
#include "diffcap/embed.hpp"
#include "diffcap/error.hpp"
#include "diffcap/harness.hpp"
#include "diffcap/purify.hpp"
#include "diffcap/report.hpp"
#include "diffcap/rng.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/sde.hpp"
#include "diffcap/stats.hpp"
#include "diffcap/tensor_io.hpp"
#include "diffcap/theory.hpp"
#include "diffcap/types.hpp"
