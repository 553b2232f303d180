#pragma once

#include "mcl/channel.hpp"
#include "mcl/codec.hpp"
#include "mcl/container.hpp"
#include "mcl/data.hpp"
#include "mcl/error.hpp"
#include "mcl/layers.hpp"
#include "mcl/linalg.hpp"
#include "mcl/mask.hpp"
#include "mcl/mcs.hpp"
#include "mcl/model.hpp"
#include "mcl/nn.hpp"
#include "mcl/optim.hpp"
#include "mcl/rng.hpp"
#include "mcl/session.hpp"
#include "mcl/tensor.hpp"
#include "mcl/train.hpp"
