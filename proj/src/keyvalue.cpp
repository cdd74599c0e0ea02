#include "twinbeam/keyvalue.hpp"

#include "twinbeam/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace twinbeam {

std::string format_double(double value)
{
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text, std::string_view context)
{
    const auto first = text.find_first_not_of(" \t");
    const auto last = text.find_last_not_of(" \t\r");
    if (first == std::string_view::npos) throw FormatError(std::string(context) + ": empty number");
    text = text.substr(first, last - first + 1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw FormatError(std::string(context) + ": '" + std::string(text) + "' is not a number");
    }
    return value;
}

std::vector<double> parse_double_list(std::string_view text, std::string_view context)
{
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (piece.find_first_not_of(" \t") != std::string_view::npos) values.push_back(parse_double(piece, context));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return values;
}

std::string join_doubles(const std::vector<double>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

KeyValueDocument KeyValueDocument::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse(buffer.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

KeyValueDocument KeyValueDocument::parse(const std::string& text)
{
    // Boost's INI reader only accepts ';' comments; '#' lines are blanked so both styles work.
    std::string cleaned;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line[first] == '#') line.clear();
        cleaned += line;
        cleaned += '\n';
    }
    boost::property_tree::ptree tree;
    std::istringstream stream(cleaned);
    try {
        boost::property_tree::ini_parser::read_ini(stream, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw FormatError("line " + std::to_string(e.line()) + ": " + e.message());
    }
    KeyValueDocument doc;
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            doc.set("", name, node.get_value<std::string>());
            continue;
        }
        for (const auto& [key, value] : node) doc.set(name, key, value.get_value<std::string>());
    }
    return doc;
}

std::string KeyValueDocument::to_string() const
{
    std::string out;
    bool first = true;
    for (const auto& [name, section] : sections_) {
        if (!name.empty()) {
            if (!first) out += '\n';
            out += '[' + name + "]\n";
        }
        for (const auto& [key, value] : section) out += key + " = " + value + '\n';
        first = false;
    }
    return out;
}

void KeyValueDocument::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_string();
}

KeyValueDocument::Section* KeyValueDocument::find_section(std::string_view section)
{
    for (auto& [name, s] : sections_)
        if (name == section) return &s;
    return nullptr;
}

const KeyValueDocument::Section* KeyValueDocument::find_section(std::string_view section) const
{
    for (const auto& [name, s] : sections_)
        if (name == section) return &s;
    return nullptr;
}

bool KeyValueDocument::has_section(std::string_view section) const { return find_section(section) != nullptr; }

std::optional<std::string> KeyValueDocument::get(std::string_view section, std::string_view key) const
{
    const auto* s = find_section(section);
    if (!s) return std::nullopt;
    for (const auto& [k, v] : *s)
        if (k == key) return v;
    return std::nullopt;
}

std::string KeyValueDocument::get_or(std::string_view section, std::string_view key, std::string fallback) const
{
    auto value = get(section, key);
    return value ? *value : std::move(fallback);
}

double KeyValueDocument::get_double(std::string_view section, std::string_view key, double fallback) const
{
    const auto value = get(section, key);
    if (!value) return fallback;
    try {
        return parse_double(*value, std::string(section) + "." + std::string(key));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

long KeyValueDocument::get_int(std::string_view section, std::string_view key, long fallback) const
{
    const auto value = get(section, key);
    if (!value) return fallback;
    long parsed = 0;
    const auto* begin = value->data();
    const auto* end = value->data() + value->size();
    const auto result = std::from_chars(begin, end, parsed);
    if (result.ec != std::errc() || result.ptr != end) {
        throw ConfigError(std::string(section) + "." + std::string(key) + ": '" + *value + "' is not an integer");
    }
    return parsed;
}

bool KeyValueDocument::get_bool(std::string_view section, std::string_view key, bool fallback) const
{
    const auto value = get(section, key);
    if (!value) return fallback;
    if (*value == "true" || *value == "on" || *value == "yes" || *value == "1") return true;
    if (*value == "false" || *value == "off" || *value == "no" || *value == "0") return false;
    throw ConfigError(std::string(section) + "." + std::string(key) + ": '" + *value + "' is not a boolean");
}

void KeyValueDocument::set(std::string_view section, std::string_view key, std::string value)
{
    auto* s = find_section(section);
    if (!s) {
        sections_.emplace_back(std::string(section), Section{});
        s = &sections_.back().second;
    }
    for (auto& [k, v] : *s) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    s->emplace_back(std::string(key), std::move(value));
}

void KeyValueDocument::set(std::string_view section, std::string_view key, double value)
{
    set(section, key, format_double(value));
}

void KeyValueDocument::set(std::string_view section, std::string_view key, long value)
{
    set(section, key, std::to_string(value));
}

void KeyValueDocument::set(std::string_view section, std::string_view key, bool value)
{
    set(section, key, std::string(value ? "true" : "false"));
}

}  // namespace twinbeam
