#include "occgen/schema.hpp"

namespace occgen {

namespace {

using nlohmann::json;

bool type_matches(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  return false;
}

void walk(const json& value, const json& schema, const json& root,
          const std::string& path, std::vector<std::string>& out) {
  if (schema.contains("$ref")) {
    const std::string ref = schema["$ref"].get<std::string>();
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) == 0 && root.contains("definitions")) {
      const json& defs = root["definitions"];
      const std::string name = ref.substr(prefix.size());
      if (defs.contains(name)) {
        walk(value, defs[name], root, path, out);
        return;
      }
    }
    out.push_back(path + ": unresolvable $ref " + ref);
    return;
  }

  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const json& alt : t)
        ok = ok || type_matches(value, alt.get<std::string>());
    } else {
      ok = type_matches(value, t.get<std::string>());
    }
    if (!ok) {
      out.push_back(path + ": type mismatch, got " +
                    std::string(value.type_name()));
      return;
    }
  }

  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const json& k : schema["required"])
        if (!value.contains(k.get<std::string>()))
          out.push_back(path + ": missing required key " +
                        k.get<std::string>());
    }
    const json* props =
        schema.contains("properties") ? &schema["properties"] : nullptr;
    const json* extra = schema.contains("additionalProperties")
                            ? &schema["additionalProperties"]
                            : nullptr;
    for (auto it = value.begin(); it != value.end(); ++it) {
      if (props && props->contains(it.key())) {
        walk(it.value(), (*props)[it.key()], root, path + "/" + it.key(),
             out);
      } else if (extra) {
        walk(it.value(), *extra, root, path + "/" + it.key(), out);
      }
    }
  }

  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i)
      walk(value[i], schema["items"], root,
           path + "/" + std::to_string(i), out);
  }
}

}  // namespace

std::vector<std::string> schema_violations(const json& value,
                                           const json& schema) {
  std::vector<std::string> out;
  walk(value, schema, schema, "#", out);
  return out;
}

}  // namespace occgen
