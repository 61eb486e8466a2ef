#include "vseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace vseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

bool valid_key(const std::string& k) {
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
    return k.find("..") == std::string::npos;
}

// Keys match case-insensitively; the canonical stored form is lowercase.
std::string fold_key(std::string k) {
    std::transform(k.begin(), k.end(), k.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return k;
}

bool parse_int(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

bool parse_real(const std::string& s, real& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    parse_text(buf.str(), path);
}

void Config::parse_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    std::set<std::string> seen_here;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string at = origin + ":" + std::to_string(lineno);
        std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(at + ": unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (!valid_key(section)) throw ConfigError(at + ": bad section name '" + section + "'");
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(at + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        if (!valid_key(key)) throw ConfigError(at + ": bad key '" + key + "'");
        if (val.empty()) throw ConfigError(at + ": empty value for '" + key + "'");
        if (!seen_here.insert(fold_key(key)).second)
            throw ConfigError(at + ": duplicate key '" + key + "'");
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        values_[fold_key(key)] = val;
    }
}

void Config::apply_env(const char* prefix) {
    const std::string pre = prefix;
    for (char** e = environ; e && *e; ++e) {
        std::string entry = *e;
        if (entry.compare(0, pre.size(), pre) != 0) continue;
        size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(pre.size(), eq - pre.size());
        std::string key;
        for (size_t i = 0; i < name.size(); ++i) {
            if (name[i] == '_' && i + 1 < name.size() && name[i + 1] == '_') {
                key += '.';
                ++i;
            } else {
                key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
            }
        }
        if (!valid_key(key)) throw ConfigError("config: bad environment key " + entry.substr(0, eq));
        values_[fold_key(key)] = entry.substr(eq + 1);
    }
}

void Config::apply_override(const std::string& keyval) {
    size_t eq = keyval.find('=');
    if (eq == std::string::npos)
        throw ConfigError("config: override must look like key=value, got '" + keyval + "'");
    std::string key = trim(keyval.substr(0, eq));
    std::string val = trim(keyval.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError("config: bad override key '" + key + "'");
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
        val = val.substr(1, val.size() - 2);
    values_[fold_key(key)] = val;
}

const std::string* Config::fetch(const std::string& key) const {
    consumed_.insert(fold_key(key));
    auto it = values_.find(fold_key(key));
    return it == values_.end() ? nullptr : &it->second;
}

bool Config::has(const std::string& key) const {
    consumed_.insert(fold_key(key));
    return values_.count(fold_key(key)) > 0;
}

int Config::get_int(const std::string& key, int def) const {
    int64_t v = get_int64(key, def);
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("config: " + key + " out of range");
    return static_cast<int>(v);
}

int64_t Config::get_int64(const std::string& key, int64_t def) const {
    const std::string* raw = fetch(key);
    if (!raw) return def;
    int64_t v;
    if (!parse_int(*raw, v))
        throw ConfigError("config: " + key + " expects an integer, got '" + *raw + "'");
    return v;
}

real Config::get_real(const std::string& key, real def) const {
    const std::string* raw = fetch(key);
    if (!raw) return def;
    real v;
    if (!parse_real(*raw, v))
        throw ConfigError("config: " + key + " expects a number, got '" + *raw + "'");
    return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
    const std::string* raw = fetch(key);
    if (!raw) return def;
    if (*raw == "true" || *raw == "1") return true;
    if (*raw == "false" || *raw == "0") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + *raw + "'");
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    const std::string* raw = fetch(key);
    return raw ? *raw : def;
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> def) const {
    const std::string* raw = fetch(key);
    if (!raw) return def;
    std::string s = trim(*raw);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw ConfigError("config: " + key + " expects [a, b, ...], got '" + *raw + "'");
    std::vector<int> out;
    std::string body = s.substr(1, s.size() - 2);
    std::istringstream in(body);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: " + key + " has an empty element");
        int64_t v;
        if (!parse_int(item, v))
            throw ConfigError("config: " + key + " element '" + item + "' is not an integer");
        out.push_back(static_cast<int>(v));
    }
    if (out.empty() && !trim(body).empty())
        throw ConfigError("config: " + key + " is malformed");
    return out;
}

std::vector<std::string> Config::unconsumed() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!consumed_.count(k)) out.push_back(k);
    return out;
}

void Config::require_all_consumed() const {
    auto left = unconsumed();
    if (left.empty()) return;
    std::string msg = "config: unknown key(s):";
    for (const auto& k : left) msg += " " + k;
    throw ConfigError(msg);
}

}  // namespace vseg
