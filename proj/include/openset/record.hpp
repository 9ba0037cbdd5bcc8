#pragma once

#include <optional>
#include <string>

#include "openset/numeric.hpp"

namespace openset {

/// One labeled vector: a raw feature sample or an embedding, depending on the stage.
struct Record {
    std::string id;
    std::string label;
    std::optional<bool> novel;
    Vector values;

    bool operator==(const Record&) const = default;
};

} // namespace openset
