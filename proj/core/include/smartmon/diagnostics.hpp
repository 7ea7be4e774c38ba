#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace smartmon {

struct Diagnostic {
    std::string pointer;  // JSON pointer into the offending document
    std::string message;
};

class Diagnostics {
public:
    void add(std::string pointer, std::string message) {
        items_.push_back({std::move(pointer), std::move(message)});
    }
    bool empty() const { return items_.empty(); }
    const std::vector<Diagnostic>& items() const { return items_; }
    void append(const Diagnostics& other, const std::string& prefix = "");
    std::string to_string() const;
    // Throws ValidationError listing every diagnostic.
    void throw_if_any(const std::string& document) const;

private:
    std::vector<Diagnostic> items_;
};

// Path-tracking accessor that records type/missing-key problems instead of throwing.
class JsonReader {
public:
    JsonReader(const nlohmann::json& j, Diagnostics& diag, std::string pointer = "")
        : j_(j), diag_(diag), ptr_(std::move(pointer)) {}

    const nlohmann::json& raw() const { return j_; }
    const std::string& pointer() const { return ptr_; }
    Diagnostics& diag() const { return diag_; }
    bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    JsonReader child(const std::string& key) const;
    JsonReader at(size_t i) const;
    size_t size() const { return j_.is_array() ? j_.size() : 0; }
    bool is_array() const { return j_.is_array(); }
    bool is_object() const { return j_.is_object(); }

    double number(const std::string& key, std::optional<double> def = std::nullopt) const;
    int integer(const std::string& key, std::optional<int> def = std::nullopt) const;
    bool boolean(const std::string& key, std::optional<bool> def = std::nullopt) const;
    std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<int> integers(const std::string& key) const;
    std::vector<std::string> strings(const std::string& key) const;

    void error(const std::string& key, const std::string& message) const;
    std::string path(const std::string& key) const { return ptr_ + "/" + key; }

    // Checks schema_version == 1 when present at this level.
    void check_schema_version() const;

private:
    const nlohmann::json& j_;
    Diagnostics& diag_;
    std::string ptr_;
};

}  // namespace smartmon
