#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// newlines and CRLF line endings.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace disagree::csv {

using Row = std::vector<std::string>;

/// Reads one record. Returns nullopt at end of input. Throws FormatError on
/// an unterminated quoted field.
std::optional<Row> read_row(std::istream& in);

void write_row(std::ostream& out, const Row& row);

}  // namespace disagree::csv
