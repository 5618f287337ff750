#include "csv.hpp"

#include "disagree/error.hpp"

namespace disagree::csv {

std::optional<Row> read_row(std::istream& in)
{
    if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;

    Row row;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !field_started_quoted) {
            quoted = true;
            field_started_quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started_quoted = false;
        } else if (c == '\n') {
            row.push_back(std::move(field));
            return row;
        } else if (c == '\r' && in.peek() == '\n') {
            // CRLF: the '\n' ends the record on the next iteration
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw Error(Errc::FormatError, "unterminated quoted CSV field");
    row.push_back(std::move(field));
    return row;
}

namespace {

bool needs_quotes(std::string_view field)
{
    return field.find_first_of(",\"\r\n") != std::string_view::npos
        || (!field.empty() && (field.front() == ' ' || field.back() == ' '));
}

}  // namespace

void write_row(std::ostream& out, const Row& row)
{
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        const std::string& field = row[i];
        if (!needs_quotes(field)) {
            out << field;
            continue;
        }
        out << '"';
        for (char c : field) {
            if (c == '"') out << '"';
            out << c;
        }
        out << '"';
    }
    out << '\n';
}

}  // namespace disagree::csv
