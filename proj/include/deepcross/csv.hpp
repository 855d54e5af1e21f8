#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace deepcross::csv {

/// Splits one line into fields. Handles double-quoted fields and "" escapes.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

/// Always quotes.
std::string quote(std::string_view field);

/// Line-oriented reader that strips a UTF-8 BOM and trailing CR.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Reads the next non-empty row. Returns false at end of input.
    bool next(std::vector<std::string>& row);

    /// 1-based line number of the row most recently returned.
    std::size_t line() const { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Parses a whole field as a finite double. Returns false on any trailing garbage.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, long long& out);

} // namespace deepcross::csv
