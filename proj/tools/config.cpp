#include "config.hpp"

#include <algorithm>

#include "scdh/error.hpp"

namespace scdh::cli {
namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto at = text.find(sep, start);
    parts.push_back(text.substr(start, at == std::string::npos ? std::string::npos : at - start));
    if (at == std::string::npos) return parts;
    start = at + 1;
  }
}

json parse_scalar(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

bool is_list_kind(Kind k) {
  return k == Kind::UIntList || k == Kind::IntList || k == Kind::RealList || k == Kind::Schedule;
}

}  // namespace

std::string flag_name(const std::string& field) {
  std::string out = field;
  std::replace(out.begin(), out.end(), '_', '-');
  return "--" + out;
}

json parse_flag(const Field& field, const std::string& text) {
  if (field.kind == Kind::String) return json(text);
  if (!is_list_kind(field.kind) || (!text.empty() && text.front() == '[')) {
    return parse_scalar(text);
  }
  json list = json::array();
  if (text.empty()) return list;
  for (const auto& part : split(text, ',')) {
    if (field.kind == Kind::Schedule) {
      const auto pair = split(part, ':');
      if (pair.size() != 2) {
        throw ValidationError(flag_name(field.name) + " expects entries like 20:0.2");
      }
      list.push_back({parse_scalar(pair[0]), parse_scalar(pair[1])});
    } else {
      list.push_back(parse_scalar(part));
    }
  }
  return list;
}

void check_kind(const Field& field, const json& v) {
  auto fail = [&](const char* expected) {
    throw ValidationError("config field '" + field.name + "' must be " + expected + ", got " +
                          v.dump());
  };
  switch (field.kind) {
    case Kind::Int:
      if (!v.is_number_integer()) fail("an integer");
      break;
    case Kind::UInt:
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        fail("a nonnegative integer");
      }
      break;
    case Kind::Real:
      if (!v.is_number()) fail("a number");
      break;
    case Kind::OptReal:
      if (!v.is_null() && !v.is_number()) fail("a number or null");
      break;
    case Kind::OptUInt:
      if (!v.is_null() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        fail("a nonnegative integer or null");
      }
      break;
    case Kind::Bool:
      if (!v.is_boolean()) fail("true or false");
      break;
    case Kind::String:
      if (!v.is_string()) fail("a string");
      break;
    case Kind::UIntList:
    case Kind::IntList:
      if (!v.is_array()) fail("a list of integers");
      for (const auto& e : v) {
        if (!e.is_number_integer() || (field.kind == Kind::UIntList && e.get<long long>() < 0)) {
          fail("a list of integers");
        }
      }
      break;
    case Kind::RealList:
      if (!v.is_array()) fail("a list of numbers");
      for (const auto& e : v) {
        if (!e.is_number()) fail("a list of numbers");
      }
      break;
    case Kind::Schedule:
      if (!v.is_array()) fail("a list of [epoch, multiplier] pairs");
      for (const auto& e : v) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
          fail("a list of [epoch, multiplier] pairs");
        }
      }
      break;
  }
}

json resolve_config(const std::string& command, const std::vector<Field>& fields,
                    const std::optional<std::string>& config_text,
                    const std::map<std::string, std::string>& flags) {
  json cfg = json::object();
  for (const auto& f : fields) cfg[f.name] = f.fallback;
  auto find = [&](const std::string& name) -> const Field* {
    for (const auto& f : fields) {
      if (f.name == name) return &f;
    }
    return nullptr;
  };
  if (config_text) {
    json file;
    try {
      file = json::parse(*config_text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("config file is not valid JSON: ") + e.what(), e.byte);
    }
    if (!file.is_object()) throw ValidationError("config file must hold a JSON object");
    if (file.contains("command") && file.contains("config")) {
      if (file["command"] != command) {
        throw ValidationError("manifest belongs to command " + file["command"].dump());
      }
      file = file["config"];
    }
    for (const auto& [key, value] : file.items()) {
      const Field* f = find(key);
      if (!f) throw ValidationError("unknown config key '" + key + "' for " + command);
      check_kind(*f, value);
      cfg[key] = value;
    }
  }
  for (const auto& [name, text] : flags) {
    const Field* f = find(name);
    if (!f) throw ValidationError("unknown flag for field '" + name + "'");
    json value = parse_flag(*f, text);
    check_kind(*f, value);
    cfg[name] = value;
  }
  return cfg;
}

}  // namespace scdh::cli
