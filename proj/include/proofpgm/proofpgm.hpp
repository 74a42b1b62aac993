#pragma once

#include "proofpgm/check.hpp"
#include "proofpgm/data.hpp"
#include "proofpgm/decode.hpp"
#include "proofpgm/error.hpp"
#include "proofpgm/eval.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/pgm.hpp"
#include "proofpgm/proof_graph.hpp"
#include "proofpgm/qdist.hpp"
#include "proofpgm/reasoner.hpp"
#include "proofpgm/rng.hpp"
#include "proofpgm/theory.hpp"
#include "proofpgm/train.hpp"
