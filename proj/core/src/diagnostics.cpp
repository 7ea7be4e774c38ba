#include "smartmon/diagnostics.hpp"

#include <sstream>

#include "smartmon/error.hpp"

namespace smartmon {

namespace {
const nlohmann::json& null_json() {
    static const nlohmann::json n;
    return n;
}
}  // namespace

void Diagnostics::append(const Diagnostics& other, const std::string& prefix) {
    for (auto& d : other.items_) items_.push_back({prefix + d.pointer, d.message});
}

std::string Diagnostics::to_string() const {
    std::ostringstream os;
    for (auto& d : items_) os << (d.pointer.empty() ? "/" : d.pointer) << ": " << d.message << "\n";
    return os.str();
}

void Diagnostics::throw_if_any(const std::string& document) const {
    if (items_.empty()) return;
    throw ValidationError("invalid " + document + ":\n" + to_string());
}

JsonReader JsonReader::child(const std::string& key) const {
    if (has(key)) return JsonReader(j_.at(key), diag_, path(key));
    return JsonReader(null_json(), diag_, path(key));
}

JsonReader JsonReader::at(size_t i) const {
    if (j_.is_array() && i < j_.size()) return JsonReader(j_.at(i), diag_, ptr_ + "/" + std::to_string(i));
    return JsonReader(null_json(), diag_, ptr_ + "/" + std::to_string(i));
}

void JsonReader::error(const std::string& key, const std::string& message) const {
    diag_.add(key.empty() ? ptr_ : path(key), message);
}

double JsonReader::number(const std::string& key, std::optional<double> def) const {
    if (!has(key)) {
        if (def) return *def;
        error(key, "missing required number");
        return 0.0;
    }
    const auto& v = j_.at(key);
    if (!v.is_number()) {
        error(key, "expected a number");
        return def.value_or(0.0);
    }
    return v.get<double>();
}

int JsonReader::integer(const std::string& key, std::optional<int> def) const {
    if (!has(key)) {
        if (def) return *def;
        error(key, "missing required integer");
        return 0;
    }
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) {
        error(key, "expected an integer");
        return def.value_or(0);
    }
    return v.get<int>();
}

bool JsonReader::boolean(const std::string& key, std::optional<bool> def) const {
    if (!has(key)) {
        if (def) return *def;
        error(key, "missing required boolean");
        return false;
    }
    const auto& v = j_.at(key);
    if (!v.is_boolean()) {
        error(key, "expected a boolean");
        return def.value_or(false);
    }
    return v.get<bool>();
}

std::string JsonReader::string(const std::string& key, std::optional<std::string> def) const {
    if (!has(key)) {
        if (def) return *def;
        error(key, "missing required string");
        return {};
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) {
        error(key, "expected a string");
        return def.value_or("");
    }
    return v.get<std::string>();
}

std::vector<double> JsonReader::numbers(const std::string& key) const {
    std::vector<double> out;
    if (!has(key) || !j_.at(key).is_array()) {
        error(key, "expected an array of numbers");
        return out;
    }
    const auto& arr = j_.at(key);
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) {
            diag_.add(path(key) + "/" + std::to_string(i), "expected a number");
            out.push_back(0.0);
        } else {
            out.push_back(arr[i].get<double>());
        }
    }
    return out;
}

std::vector<int> JsonReader::integers(const std::string& key) const {
    std::vector<int> out;
    if (!has(key) || !j_.at(key).is_array()) {
        error(key, "expected an array of integers");
        return out;
    }
    const auto& arr = j_.at(key);
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number_integer()) {
            diag_.add(path(key) + "/" + std::to_string(i), "expected an integer");
            out.push_back(0);
        } else {
            out.push_back(arr[i].get<int>());
        }
    }
    return out;
}

std::vector<std::string> JsonReader::strings(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key) || !j_.at(key).is_array()) {
        error(key, "expected an array of strings");
        return out;
    }
    const auto& arr = j_.at(key);
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string()) {
            diag_.add(path(key) + "/" + std::to_string(i), "expected a string");
            out.emplace_back();
        } else {
            out.push_back(arr[i].get<std::string>());
        }
    }
    return out;
}

void JsonReader::check_schema_version() const {
    if (!has("schema_version")) {
        error("schema_version", "missing schema_version");
        return;
    }
    if (integer("schema_version") != 1) error("schema_version", "unsupported schema_version (expected 1)");
}

}  // namespace smartmon
