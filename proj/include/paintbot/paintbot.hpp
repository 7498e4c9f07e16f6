#pragma once

#include "paintbot/adam.hpp"
#include "paintbot/canvas.hpp"
#include "paintbot/config.hpp"
#include "paintbot/dataset.hpp"
#include "paintbot/env.hpp"
#include "paintbot/error.hpp"
#include "paintbot/gradcheck.hpp"
#include "paintbot/image_io.hpp"
#include "paintbot/losses.hpp"
#include "paintbot/nn.hpp"
#include "paintbot/policy.hpp"
#include "paintbot/rollout.hpp"
#include "paintbot/trainer.hpp"
