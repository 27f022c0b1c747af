#pragma once

#include "hybridsens/asa.hpp"
#include "hybridsens/csv.hpp"
#include "hybridsens/errors.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/hi2.hpp"
#include "hybridsens/integrate.hpp"
#include "hybridsens/model.hpp"
#include "hybridsens/problems.hpp"
#include "hybridsens/sdirk.hpp"
#include "hybridsens/verify.hpp"
