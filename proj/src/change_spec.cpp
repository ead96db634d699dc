#include "cogap/change_spec.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace cogap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ChannelSet::to_string() const {
  std::string s;
  for (std::size_t c = 0; c < 3; ++c)
    if (allowed[c]) s.push_back("RGB"[c]);
  return s;
}

void validate(const ChangeSpec& spec) {
  auto bad = [](const char* key, const std::string& why) {
    throw std::invalid_argument(std::string("change spec key '") + key + "': " + why);
  };
  if (spec.channels.empty()) bad("channels", "at least one channel required");
  if (!(spec.step_epsilon > 0.0f && spec.step_epsilon < 1.0f)) bad("step_epsilon", "must lie in (0, 1)");
  if (spec.max_iterations == 0) bad("max_iterations", "must be positive");
  if (!(spec.stop_target_prob > 0.5f && spec.stop_target_prob <= 1.0f)) bad("stop_target_prob", "must lie in (0.5, 1]");
  if (spec.plateau_window == 0) bad("plateau_window", "must be positive");
  if (spec.plateau_window >= spec.max_iterations) bad("plateau_window", "must be smaller than max_iterations");
  if (!(spec.plateau_delta >= 0.0f)) bad("plateau_delta", "must be non-negative");
  if (spec.mask.width == 0 || spec.mask.height == 0) bad("mask", "empty mask");
}

namespace {

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw std::invalid_argument(std::string("change spec: missing key '") + key + "'");
  return *it;
}

[[noreturn]] void wrong_type(const char* key, const char* expected) {
  throw std::invalid_argument(std::string("change spec key '") + key + "': expected " + expected);
}

float number(const json& v, const char* key) {
  if (!v.is_number()) wrong_type(key, "a number");
  return v.get<float>();
}

std::size_t count(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) wrong_type(key, "a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

ChangeSpec parse_change_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open change spec " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("change spec " + path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("change spec " + path.string() + ": top level must be an object");

  static const std::set<std::string> known = {"mask",           "channels",       "step_epsilon",
                                              "target_class",   "max_iterations", "stop_target_prob",
                                              "plateau_window", "plateau_delta",  "description"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw std::invalid_argument("change spec: unknown key '" + key + "'");
  }

  ChangeSpec spec;

  const json& mask = require(doc, "mask");
  if (!mask.is_string()) wrong_type("mask", "a path string");
  fs::path mask_path = mask.get<std::string>();
  if (mask_path.is_relative()) mask_path = path.parent_path() / mask_path;
  spec.mask = load_mask(mask_path);

  const json& channels = require(doc, "channels");
  if (!channels.is_array()) wrong_type("channels", "an array of \"R\"/\"G\"/\"B\"");
  for (const auto& c : channels) {
    if (!c.is_string()) wrong_type("channels", "an array of \"R\"/\"G\"/\"B\"");
    const auto name = c.get<std::string>();
    std::size_t idx = 0;
    if (name == "R") idx = 0;
    else if (name == "G") idx = 1;
    else if (name == "B") idx = 2;
    else throw std::invalid_argument("change spec key 'channels': unknown channel \"" + name + "\"");
    if (spec.channels.allowed[idx]) throw std::invalid_argument("change spec key 'channels': duplicate channel \"" + name + "\"");
    spec.channels.allowed[idx] = true;
  }

  spec.step_epsilon = number(require(doc, "step_epsilon"), "step_epsilon");
  spec.target_class = count(require(doc, "target_class"), "target_class");
  spec.max_iterations = count(require(doc, "max_iterations"), "max_iterations");
  if (doc.contains("stop_target_prob")) spec.stop_target_prob = number(doc["stop_target_prob"], "stop_target_prob");
  if (doc.contains("plateau_window")) spec.plateau_window = count(doc["plateau_window"], "plateau_window");
  if (doc.contains("plateau_delta")) spec.plateau_delta = number(doc["plateau_delta"], "plateau_delta");
  if (doc.contains("description")) {
    if (!doc["description"].is_string()) wrong_type("description", "a string");
    spec.description = doc["description"].get<std::string>();
  }

  validate(spec);
  return spec;
}

Tensor apply_constraints(const Tensor& delta, const ChangeSpec& spec) {
  const auto& m = spec.mask;
  if (delta.rank() != 3 || delta.dim(0) != 3 || delta.dim(1) != m.height || delta.dim(2) != m.width) {
    throw std::invalid_argument("apply_constraints: delta " + to_string(delta.shape()) + " does not match mask " +
                                std::to_string(m.height) + "x" + std::to_string(m.width));
  }
  Tensor out(delta.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    if (!spec.channels.contains(c)) continue;
    for (std::size_t y = 0; y < m.height; ++y)
      for (std::size_t x = 0; x < m.width; ++x)
        if (m.at(y, x)) out.at(c, y, x) = delta.at(c, y, x);
  }
  return out;
}

}  // namespace cogap
