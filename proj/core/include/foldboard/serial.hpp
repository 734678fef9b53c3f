#pragma once

#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace foldboard {

/// Prints a double with 17 significant digits, enough to round-trip IEEE754
/// binary64 exactly through text.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Structured-text model container shared by classifier, featurizer and
/// policy files: a type tag plus named numeric fields.
struct TextModel {
    std::string type;
    std::map<std::string, std::vector<double>> fields;

    const std::vector<double>& field(const std::string& name) const {
        auto it = fields.find(name);
        if (it == fields.end())
            throw std::runtime_error("model-missing-field: " + name);
        return it->second;
    }
    double scalar(const std::string& name) const {
        const auto& f = field(name);
        if (f.size() != 1)
            throw std::runtime_error("model-field-not-scalar: " + name);
        return f[0];
    }
    bool has(const std::string& name) const { return fields.count(name) != 0; }

    void save(const std::string& path) const;
    static TextModel load(const std::string& path);
};

}  // namespace foldboard
