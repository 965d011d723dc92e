#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mfstop {

// Round-trip decimal form used by every artifact ("%.17g").
std::string format_double(double v);

// RFC-4180 writer, LF line endings.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header);
    CsvWriter(std::ostream& out, const std::vector<std::string>& header);

    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
    CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
    CsvWriter& cell(std::string_view s);
    void end_row();

private:
    void sep();
    std::ostream& out_;
    bool first_ = true;
};

// Minimal reader for numeric tables: header names plus rows of doubles.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::size_t column(std::string_view name) const;  // throws IoError if absent
};

CsvTable read_numeric_csv(std::istream& in);

}  // namespace mfstop
