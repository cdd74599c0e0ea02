#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace twinbeam {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
/// Strict parse of a whole string as a double; throws FormatError.
double parse_double(std::string_view text, std::string_view context);
std::vector<double> parse_double_list(std::string_view text, std::string_view context);
std::string join_doubles(const std::vector<double>& values);

/// Ordered INI-style document: "[section]" headers followed by "key = value" lines.
/// Insertion order is preserved so that written files are byte-stable.
class KeyValueDocument {
public:
    using Section = std::vector<std::pair<std::string, std::string>>;

    static KeyValueDocument load(const std::filesystem::path& path);
    static KeyValueDocument parse(const std::string& text);
    void save(const std::filesystem::path& path) const;
    std::string to_string() const;

    bool has_section(std::string_view section) const;
    std::optional<std::string> get(std::string_view section, std::string_view key) const;
    std::string get_or(std::string_view section, std::string_view key, std::string fallback) const;
    double get_double(std::string_view section, std::string_view key, double fallback) const;
    long get_int(std::string_view section, std::string_view key, long fallback) const;
    bool get_bool(std::string_view section, std::string_view key, bool fallback) const;

    /// Replaces an existing value or appends the key to the section (creating it).
    void set(std::string_view section, std::string_view key, std::string value);
    void set(std::string_view section, std::string_view key, double value);
    void set(std::string_view section, std::string_view key, long value);
    void set(std::string_view section, std::string_view key, int value) { set(section, key, static_cast<long>(value)); }
    void set(std::string_view section, std::string_view key, bool value);
    void set(std::string_view section, std::string_view key, const char* value) { set(section, key, std::string(value)); }

    const std::vector<std::pair<std::string, Section>>& sections() const noexcept { return sections_; }

private:
    Section* find_section(std::string_view section);
    const Section* find_section(std::string_view section) const;

    std::vector<std::pair<std::string, Section>> sections_;
};

}  // namespace twinbeam
