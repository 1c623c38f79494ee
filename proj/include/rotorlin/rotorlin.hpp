#pragma once

#include "rotorlin/errors.hpp"
#include "rotorlin/autodiff.hpp"
#include "rotorlin/clifford.hpp"
#include "rotorlin/bivector.hpp"
#include "rotorlin/decomposition.hpp"
#include "rotorlin/rotor.hpp"
#include "rotorlin/matrix.hpp"
#include "rotorlin/gadget.hpp"
#include "rotorlin/training.hpp"
#include "rotorlin/io.hpp"
#include "rotorlin/experiments.hpp"
