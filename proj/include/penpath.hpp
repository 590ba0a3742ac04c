#pragma once

#include "penpath/errors.hpp"
#include "penpath/sym_sweep.hpp"
#include "penpath/qp_model.hpp"
#include "penpath/path_engine.hpp"
#include "penpath/model_selection.hpp"
#include "penpath/shape_builders.hpp"
#include "penpath/oracle.hpp"
