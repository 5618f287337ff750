#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace disagree {

/// 64-bit FNV-1a over raw bytes (offset basis 0xcbf29ce484222325,
/// prime 0x100000001b3).
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept
{
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

struct NgramRange {
    std::size_t min = 3;
    std::size_t max = 5;

    friend bool operator==(const NgramRange&, const NgramRange&) = default;
};

/// Hashed bag-of-words + character n-gram feature configuration. Serialized
/// into every model file.
struct FeatureSpace {
    std::size_t dimension = std::size_t{1} << 18;
    std::optional<NgramRange> char_ngrams = NgramRange{};
    bool lowercase = true;

    /// Throws InvalidConfig unless dimension is a power of two >= 2 and the
    /// n-gram range is non-empty with min >= 1.
    void validate() const;

    friend bool operator==(const FeatureSpace&, const FeatureSpace&) = default;
};

/// Sparse vector with entries sorted by index and unique.
class FeatureVector {
public:
    using Entry = std::pair<std::size_t, double>;

    FeatureVector() = default;
    /// Entries are sorted and duplicates summed; weights must be finite.
    explicit FeatureVector(std::vector<Entry> entries);

    std::span<const Entry> entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    double norm() const noexcept { return norm_; }
    /// Weight at index, 0 if absent.
    double at(std::size_t index) const noexcept;

    /// Scales to unit L2 norm (no-op on the zero vector).
    void normalize() noexcept;
    /// Appends an entry past every existing index (used for conditioning inputs).
    void append(std::size_t index, double weight);

    friend bool operator==(const FeatureVector& a, const FeatureVector& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
    double norm_ = 0.0;
};

/// Splits on maximal runs of non-alphanumeric code points, lowercasing first
/// when requested. Input is UTF-8; malformed bytes act as separators.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

/// Word and character n-gram counts hashed into `space.dimension` buckets,
/// then L2-normalized. Word features hash the token bytes; n-gram features
/// hash "#" followed by the n code points taken from "_" + token + "_".
FeatureVector featurize(std::string_view text, const FeatureSpace& space);

/// The raw byte strings featurize() hashes, in emission order (pre-hash).
std::vector<std::string> feature_strings(std::string_view text, const FeatureSpace& space);

}  // namespace disagree
