#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmask {

/// Flat line-oriented key=value configuration with [section] blocks and '#'
/// comments. Keys are stored as "section.key"; keys before any section header
/// are stored bare. Unknown keys are rejected at validation time.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                                ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                            ": expected key=value, got '" + t + "'");
            std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                            ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = trim(t.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error(path + ": cannot open");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': '" + it->second +
                                        "' is not a number");
        }
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return static_cast<std::size_t>(std::stoull(it->second));
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': '" + it->second +
                                        "' is not a count");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::invalid_argument("config key '" + key + "': '" + it->second +
                                    "' is not a boolean");
    }

    std::vector<double> get_double_list(const std::string& key,
                                        std::vector<double> fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        for (const auto& item : split_list(it->second)) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw std::invalid_argument("config key '" + key + "': '" + item +
                                            "' is not a number");
            }
        }
        return out;
    }

    /// Rejects any key not in the allowed set, naming the offenders.
    void validate_keys(const std::set<std::string>& allowed) const {
        std::string unknown;
        for (const auto& [key, _] : values_)
            if (!allowed.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
        if (!unknown.empty())
            throw std::invalid_argument("config: unknown keys: " + unknown);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

private:
    static std::string strip_comment(const std::string& s) {
        const auto pos = s.find('#');
        return pos == std::string::npos ? s : s.substr(0, pos);
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace softmask
