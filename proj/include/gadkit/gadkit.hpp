/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/gadkit.hpp
 * \brief Umbrella header. The remote backend is in gadkit/remote.hpp and
 *  needs a threads library at link time.
 */
#pragma once

#include "gadkit/decode.hpp"
#include "gadkit/errors.hpp"
#include "gadkit/exact.hpp"
#include "gadkit/grammar.hpp"
#include "gadkit/lm.hpp"
#include "gadkit/metrics.hpp"
#include "gadkit/rng.hpp"
#include "gadkit/trie.hpp"
