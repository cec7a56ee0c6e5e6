#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace occgen {

// Structural check against the subset of JSON Schema this project
// ships: type (single or list), required, properties,
// additionalProperties, items, and $ref into #/definitions. Returns
// human-readable violations, empty when the document conforms.
std::vector<std::string> schema_violations(const nlohmann::json& value,
                                           const nlohmann::json& schema);

}  // namespace occgen
