#include "polylab/toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "polylab/error.hpp"
#include "polylab/io.hpp"

namespace polylab {

namespace {

using nlohmann::json;

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                table = header(root);
            } else {
                key_value(*table);
            }
            end_of_line();
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::set<std::string> defined_;

    bool eof() const { return pos_ >= s_.size(); }
    char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }

    char get() {
        const char c = s_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorCode::config_error, "TOML line " + std::to_string(line_) + ": " + what);
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) get();
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') get();
    }

    void skip_blank_lines() {
        while (!eof()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\r') get();
            if (peek() == '\n') get();
            else break;
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_all() {
        while (!eof()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') get();
            else if (c == '#') skip_comment();
            else break;
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (peek() == '\r') get();
        if (eof()) return;
        if (peek() != '\n') error("unexpected text after value");
        get();
    }

    void expect(char c) {
        if (peek() != c) error(std::string("expected '") + c + "'");
        get();
    }

    std::string key_part() {
        skip_spaces();
        if (peek() == '"') return basic_string();
        if (peek() == '\'') return literal_string();
        std::string k;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) k += get();
        if (k.empty()) error("expected a key");
        return k;
    }

    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{key_part()};
        skip_spaces();
        while (peek() == '.') {
            get();
            parts.push_back(key_part());
            skip_spaces();
        }
        return parts;
    }

    json* descend(json* t, const std::string& k) {
        json& next = (*t)[k];
        if (next.is_null()) next = json::object();
        if (next.is_array() && !next.empty() && next.back().is_object()) return &next.back();
        if (!next.is_object()) error("key '" + k + "' is not a table");
        return &next;
    }

    json* header(json& root) {
        get();
        const bool array = peek() == '[';
        if (array) get();
        const auto parts = dotted_key();
        expect(']');
        if (array) expect(']');
        json* t = &root;
        // Identifies the table, including which array-of-tables element it sits in.
        std::string path;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            path += parts[i];
            const json& node = (*t)[parts[i]];
            if (node.is_array()) path += '#' + std::to_string(node.size());
            path += '.';
            t = descend(t, parts[i]);
        }
        json& last = (*t)[parts.back()];
        if (array) {
            if (last.is_null()) last = json::array();
            if (!last.is_array()) error("'" + parts.back() + "' is not an array of tables");
            last.push_back(json::object());
            return &last.back();
        }
        if (!defined_.insert(path + parts.back()).second) error("table '" + parts.back() + "' defined twice");
        if (last.is_null()) last = json::object();
        if (!last.is_object()) error("'" + parts.back() + "' is already a value");
        return &last;
    }

    void key_value(json& table) {
        const auto parts = dotted_key();
        skip_spaces();
        expect('=');
        skip_spaces();
        json* t = &table;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) t = descend(t, parts[i]);
        if (t->contains(parts.back())) error("duplicate key '" + parts.back() + "'");
        (*t)[parts.back()] = value();
    }

    json value() {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') return inline_table();
        if (s_.substr(pos_, 4) == "true") {
            pos_ += 4;
            return true;
        }
        if (s_.substr(pos_, 5) == "false") {
            pos_ += 5;
            return false;
        }
        return number();
    }

    std::string basic_string() {
        expect('"');
        if (peek() == '"' && peek(1) == '"') error("multi-line strings are not supported");
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') error("unterminated string");
            char c = get();
            if (c == '"') break;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (eof()) error("unterminated escape");
            c = get();
            switch (c) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'b': out.push_back('\b'); break;
            case 'f': out.push_back('\f'); break;
            case '"': out.push_back('"'); break;
            case '\\': out.push_back('\\'); break;
            case 'u': out += unicode(4); break;
            case 'U': out += unicode(8); break;
            default: error(std::string("unknown escape \\") + c);
            }
        }
        return out;
    }

    std::string unicode(int digits) {
        if (pos_ + static_cast<std::size_t>(digits) > s_.size()) error("short unicode escape");
        std::uint32_t cp = 0;
        const auto* first = s_.data() + pos_;
        const auto r = std::from_chars(first, first + digits, cp, 16);
        if (r.ec != std::errc{} || r.ptr != first + digits) error("bad unicode escape");
        pos_ += static_cast<std::size_t>(digits);
        std::string out;
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        return out;
    }

    std::string literal_string() {
        expect('\'');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') error("unterminated string");
            const char c = get();
            if (c == '\'') break;
            out.push_back(c);
        }
        return out;
    }

    json array() {
        expect('[');
        json out = json::array();
        skip_all();
        while (peek() != ']') {
            out.push_back(value());
            skip_all();
            if (peek() == ',') {
                get();
                skip_all();
            } else if (peek() != ']') {
                error("expected ',' or ']' in array");
            }
        }
        get();
        return out;
    }

    json inline_table() {
        expect('{');
        json out = json::object();
        skip_spaces();
        if (peek() == '}') {
            get();
            return out;
        }
        while (true) {
            key_value(out);
            skip_spaces();
            if (peek() == ',') {
                get();
                continue;
            }
            expect('}');
            return out;
        }
    }

    json number() {
        std::string tok;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                          peek() == '.' || peek() == '_'))
            tok += get();
        if (tok.empty()) error("expected a value");
        std::string body = tok;
        bool negative = false;
        if (body[0] == '+' || body[0] == '-') {
            negative = body[0] == '-';
            body.erase(0, 1);
        }
        if (body == "inf") return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
        std::string digits;
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] != '_') {
                digits.push_back(body[i]);
                continue;
            }
            const bool ok = i > 0 && i + 1 < body.size() && std::isdigit(static_cast<unsigned char>(body[i - 1])) &&
                            std::isdigit(static_cast<unsigned char>(body[i + 1]));
            if (!ok) error("misplaced '_' in number '" + tok + "'");
        }
        if (digits.empty()) error("bad number '" + tok + "'");
        const bool is_float = digits.find_first_of(".eE") != std::string::npos;
        const char* first = digits.data();
        const char* last = first + digits.size();
        if (!is_float) {
            if (digits.size() > 1 && digits[0] == '0') error("leading zero in '" + tok + "'");
            std::int64_t v = 0;
            const auto r = std::from_chars(first, last, v);
            if (r.ec != std::errc{} || r.ptr != last) error("bad integer '" + tok + "'");
            return negative ? -v : v;
        }
        double v = 0.0;
        const auto r = std::from_chars(first, last, v);
        if (r.ec != std::errc{} || r.ptr != last) error("bad float '" + tok + "'");
        return negative ? -v : v;
    }
};

} // namespace

nlohmann::json parse_toml(std::string_view text) { return Parser(text).parse(); }

nlohmann::json load_toml(const std::filesystem::path& path) { return parse_toml(read_text(path)); }

} // namespace polylab
