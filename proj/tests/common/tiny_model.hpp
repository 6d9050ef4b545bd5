#pragma once

#include "fdnet/model.hpp"

namespace testing_support {

/// Full-width encoder/decoder with narrow recurrent layers, for fast tests.
inline fdnet::ModelConfig tiny_config(int size = 16, int hidden = 4) {
    fdnet::ModelConfig c;
    c.height = c.width = size;
    c.flow_hidden = c.flow_head_hidden = c.def_hidden = hidden;
    return c;
}

}  // namespace testing_support
