#ifndef BCPNN_BCPNN_HPP
#define BCPNN_BCPNN_HPP

#include "geometry.hpp"
#include "kernels.hpp"
#include "plasticity.hpp"
#include "mnist.hpp"
#include "unsup.hpp"
#include "classifiers.hpp"
#include "persist.hpp"
#include "experiment.hpp"
#include "config.hpp"

#endif
