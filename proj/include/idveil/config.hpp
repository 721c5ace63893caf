// Line-oriented `key = value` run configuration with a fixed resolution
// order: built-in defaults, then the config file, then command-line flags.
// Every run persists the fully resolved parameter set; re-running from that
// file reproduces the outputs bit for bit.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/corpus.hpp"
#include "idveil/tensor_io.hpp"

namespace idveil {

inline std::map<std::string, std::string> load_config_file(
    const std::filesystem::path& path) {
  return detail::parse_key_values(read_file(path));
}

// Registry of a command's parameters. Fields are declared once with their
// storage; the same declaration drives config-file parsing and the resolved
// dump, so the two can never drift apart.
class ParamSet {
 public:
  void add_u64(const std::string& key, std::uint64_t* v) {
    fields_.push_back({key,
                       [v](const std::string& s) { *v = std::stoull(s); },
                       [v] { return std::to_string(*v); }});
  }

  void add_size(const std::string& key, std::size_t* v) {
    fields_.push_back({key,
                       [v](const std::string& s) { *v = std::stoull(s); },
                       [v] { return std::to_string(*v); }});
  }

  void add_double(const std::string& key, double* v) {
    fields_.push_back({key,
                       [v](const std::string& s) { *v = std::stod(s); },
                       [v] { return format_double(*v); }});
  }

  void add_bool(const std::string& key, bool* v) {
    fields_.push_back({key,
                       [v](const std::string& s) {
                         *v = (s == "1" || s == "true" || s == "yes");
                       },
                       [v] { return std::string(*v ? "true" : "false"); }});
  }

  void add_string(const std::string& key, std::string* v) {
    fields_.push_back({key, [v](const std::string& s) { *v = s; },
                       [v] { return *v; }});
  }

  void add_double_list(const std::string& key, std::vector<double>* v) {
    fields_.push_back({key,
                       [v](const std::string& s) {
                         v->clear();
                         std::istringstream in(s);
                         double x;
                         while (in >> x) v->push_back(x);
                       },
                       [v] {
                         std::string out;
                         for (double x : *v) {
                           if (!out.empty()) out += " ";
                           out += format_double(x);
                         }
                         return out;
                       }});
  }

  void add_size_list(const std::string& key, std::vector<std::size_t>* v) {
    fields_.push_back({key,
                       [v](const std::string& s) {
                         v->clear();
                         std::istringstream in(s);
                         std::size_t x;
                         while (in >> x) v->push_back(x);
                       },
                       [v] {
                         std::string out;
                         for (std::size_t x : *v) {
                           if (!out.empty()) out += " ";
                           out += std::to_string(x);
                         }
                         return out;
                       }});
  }

  // Applies config-file values for every key the command line left untouched.
  void apply(const std::map<std::string, std::string>& file_values,
             const std::function<bool(const std::string&)>& overridden) const {
    for (const auto& f : fields_) {
      auto it = file_values.find(f.key);
      if (it == file_values.end()) continue;
      if (overridden && overridden(f.key)) continue;
      try {
        f.set(it->second);
      } catch (const std::exception&) {
        throw parameter_error("config: bad value for key '" + f.key + "': " +
                              it->second);
      }
    }
  }

  std::string resolved() const {
    std::string out;
    for (const auto& f : fields_) {
      out += f.key + " = " + f.get() + "\n";
    }
    return out;
  }

 private:
  struct Field {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };
  std::vector<Field> fields_;
};

inline std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("IDVEIL_OUT_ROOT")) {
    return std::filesystem::path(env);
  }
  return std::filesystem::path("out");
}

}  // namespace idveil
