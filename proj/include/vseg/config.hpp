#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "vseg/common.hpp"

namespace vseg {

// Layered key-value configuration. Values are dotted keys in a small TOML
// subset: [section] headers, key = value lines, "strings", booleans, numbers,
// and flat integer arrays. Later layers override earlier ones, so apply in
// precedence order: file, then environment, then command line. Keys match
// case-insensitively; the stored canonical form is lowercase.
//
// Readers mark keys as consumed; require_all_consumed() turns leftover keys
// into an error so misspelled settings never pass silently.
class Config {
  public:
    void load_file(const std::string& path);
    void parse_text(const std::string& text, const std::string& origin);
    // VSEG_SCHEDULE__BETA_START=1e-5 sets schedule.beta_start; a double
    // underscore separates sections, names are matched case-insensitively.
    void apply_env(const char* prefix = "VSEG_");
    void apply_override(const std::string& keyval);  // "a.b=3"

    bool has(const std::string& key) const;
    int get_int(const std::string& key, int def) const;
    int64_t get_int64(const std::string& key, int64_t def) const;
    real get_real(const std::string& key, real def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::string get_string(const std::string& key, const std::string& def) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> def) const;

    std::vector<std::string> unconsumed() const;
    void require_all_consumed() const;

    const std::map<std::string, std::string>& raw() const { return values_; }

  private:
    const std::string* fetch(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

}  // namespace vseg
