#include "disagree/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "disagree/error.hpp"

namespace disagree {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

struct Decoded {
    char32_t cp;
    std::size_t length;
};

// Strict UTF-8 decoding: overlong forms, surrogates and values past U+10FFFF
// decode to U+FFFD one byte at a time.
Decoded decode_utf8(std::string_view s, std::size_t pos) noexcept
{
    const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    const unsigned char lead = byte(pos);
    if (lead < 0x80) return {lead, 1};

    std::size_t length;
    char32_t cp;
    char32_t min;
    if ((lead & 0xE0) == 0xC0) { length = 2; cp = lead & 0x1F; min = 0x80; }
    else if ((lead & 0xF0) == 0xE0) { length = 3; cp = lead & 0x0F; min = 0x800; }
    else if ((lead & 0xF8) == 0xF0) { length = 4; cp = lead & 0x07; min = 0x10000; }
    else return {kReplacement, 1};

    if (pos + length > s.size()) return {kReplacement, 1};
    for (std::size_t i = 1; i < length; ++i) {
        const unsigned char c = byte(pos + i);
        if ((c & 0xC0) != 0x80) return {kReplacement, 1};
        cp = (cp << 6) | (c & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {kReplacement, 1};
    return {cp, length};
}

void encode_utf8(char32_t cp, std::string& out)
{
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
}

struct Range {
    char32_t lo, hi;
};

// Non-ASCII blocks treated as separators: Latin-1 punctuation and symbols,
// general punctuation through miscellaneous symbols and arrows, CJK
// punctuation, fullwidth ASCII punctuation, private use, specials and emoji.
// Everything else above U+007F counts as alphanumeric.
constexpr Range kSeparatorRanges[] = {
    {0x0080, 0x00A9}, {0x00AB, 0x00B1}, {0x00B4, 0x00B4}, {0x00B6, 0x00B8}, {0x00BB, 0x00BB},
    {0x00BF, 0x00BF}, {0x00D7, 0x00D7}, {0x00F7, 0x00F7}, {0x037E, 0x037E}, {0x0387, 0x0387},
    {0x055A, 0x055F}, {0x0589, 0x058A}, {0x060C, 0x060D}, {0x061B, 0x061F}, {0x066A, 0x066D},
    {0x06D4, 0x06D4}, {0x0964, 0x0965}, {0x0E4F, 0x0E4F}, {0x0E5A, 0x0E5B}, {0x1680, 0x1680},
    {0x2000, 0x2BFF}, {0x2E00, 0x2E7F}, {0x3000, 0x3004}, {0x3008, 0x3020}, {0x3030, 0x3030},
    {0xE000, 0xF8FF}, {0xFD3E, 0xFD3F}, {0xFE10, 0xFE1F}, {0xFE30, 0xFE6F}, {0xFEFF, 0xFEFF},
    {0xFF01, 0xFF0F}, {0xFF1A, 0xFF20}, {0xFF3B, 0xFF40}, {0xFF5B, 0xFF65}, {0xFFF0, 0xFFFF},
    {0x1F000, 0x1FAFF},
};

bool is_alnum(char32_t cp) noexcept
{
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    return std::none_of(std::begin(kSeparatorRanges), std::end(kSeparatorRanges),
                        [cp](Range r) { return cp >= r.lo && cp <= r.hi; });
}

// Simple case mapping for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t cp) noexcept
{
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
    if (cp >= 0x100 && cp <= 0x137) return cp | 1;
    if (cp >= 0x139 && cp <= 0x148) return (cp & 1) ? cp + 1 : cp;
    if (cp >= 0x14A && cp <= 0x177) return cp | 1;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x179 && cp <= 0x17E) return (cp & 1) ? cp + 1 : cp;
    if (cp == 0x386) return 0x3AC;
    if (cp >= 0x388 && cp <= 0x38A) return cp + 37;
    if (cp == 0x38C) return 0x3CC;
    if (cp == 0x38E || cp == 0x38F) return cp + 63;
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    return cp;
}

}  // namespace

// --- FeatureSpace ----------------------------------------------------------

void FeatureSpace::validate() const
{
    if (dimension < 2 || (dimension & (dimension - 1)) != 0)
        throw Error(Errc::InvalidConfig, "feature dimension " + std::to_string(dimension)
                                             + " is not a power of two >= 2");
    if (char_ngrams && (char_ngrams->min < 1 || char_ngrams->min > char_ngrams->max))
        throw Error(Errc::InvalidConfig, "empty character n-gram range");
}

// --- FeatureVector ---------------------------------------------------------

FeatureVector::FeatureVector(std::vector<Entry> entries)
{
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (const auto& [index, weight] : entries) {
        if (!std::isfinite(weight)) throw Error(Errc::InvalidConfig, "non-finite feature weight");
        if (!entries_.empty() && entries_.back().first == index) entries_.back().second += weight;
        else entries_.emplace_back(index, weight);
    }
    double sq = 0.0;
    for (const auto& e : entries_) sq += e.second * e.second;
    norm_ = std::sqrt(sq);
}

double FeatureVector::at(std::size_t index) const noexcept
{
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                                     [](const Entry& e, std::size_t i) { return e.first < i; });
    return (it != entries_.end() && it->first == index) ? it->second : 0.0;
}

void FeatureVector::normalize() noexcept
{
    if (norm_ == 0.0) return;
    for (auto& e : entries_) e.second /= norm_;
    double sq = 0.0;
    for (const auto& e : entries_) sq += e.second * e.second;
    norm_ = std::sqrt(sq);
}

void FeatureVector::append(std::size_t index, double weight)
{
    if (!entries_.empty() && entries_.back().first >= index)
        throw Error(Errc::DimensionMismatch, "appended feature index must exceed existing indices");
    if (!std::isfinite(weight)) throw Error(Errc::InvalidConfig, "non-finite feature weight");
    entries_.emplace_back(index, weight);
    norm_ = std::hypot(norm_, weight);
}

// --- tokenization and hashing ----------------------------------------------

std::vector<std::string> tokenize(std::string_view text, bool lowercase)
{
    std::vector<std::string> tokens;
    std::string current;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto [cp, length] = decode_utf8(text, pos);
        pos += length;
        if (is_alnum(cp)) {
            encode_utf8(lowercase ? to_lower(cp) : cp, current);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> feature_strings(std::string_view text, const FeatureSpace& space)
{
    std::vector<std::string> out;
    for (auto& token : tokenize(text, space.lowercase)) {
        if (space.char_ngrams) {
            std::vector<std::size_t> starts;  // byte offset of each code point in marked
            const std::string marked = "_" + token + "_";
            for (std::size_t pos = 0; pos < marked.size(); pos += decode_utf8(marked, pos).length)
                starts.push_back(pos);
            starts.push_back(marked.size());
            const std::size_t points = starts.size() - 1;
            for (std::size_t n = space.char_ngrams->min; n <= space.char_ngrams->max && n <= points; ++n) {
                for (std::size_t i = 0; i + n <= points; ++i)
                    out.push_back("#" + marked.substr(starts[i], starts[i + n] - starts[i]));
            }
        }
        out.push_back(std::move(token));
    }
    return out;
}

FeatureVector featurize(std::string_view text, const FeatureSpace& space)
{
    space.validate();
    std::map<std::size_t, double> counts;
    for (const auto& feature : feature_strings(text, space))
        counts[static_cast<std::size_t>(fnv1a64(feature) % space.dimension)] += 1.0;
    FeatureVector vector(std::vector<FeatureVector::Entry>(counts.begin(), counts.end()));
    vector.normalize();
    return vector;
}

}  // namespace disagree
