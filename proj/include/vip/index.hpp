#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vip/snapshot.hpp"

namespace vip {

// One term occurrence: position in the page's token stream plus the
// rendered bounding box of the token on the snapshot.
struct TokenHit {
    std::uint32_t offset = 0;
    HighlightRect rect;
    bool operator==(const TokenHit&) const = default;
};

struct PostingEntry {
    std::uint32_t doc_index = 0;  // into InvertedIndex::docs
    std::vector<TokenHit> hits;   // sorted by offset, offsets unique
    bool operator==(const PostingEntry&) const = default;
};

// A document ready for indexing: every token carries its stream offset and
// its rendered rectangle.
struct IndexableToken {
    std::string text;
    std::uint32_t offset = 0;
    HighlightRect rect;
};

struct IndexableDoc {
    std::string doc_id;
    std::vector<IndexableToken> tokens;
};

// Extended inverted index: per-term postings carrying offsets and highlight
// rectangles. Immutable after build; concurrent lookups are safe.
struct InvertedIndex {
    std::uint32_t snapshot_width = 0;
    std::uint32_t snapshot_height = 0;
    std::vector<std::string> docs;   // sorted; position = doc index
    std::vector<std::string> terms;  // sorted; position = dense term id
    std::vector<std::vector<PostingEntry>> postings;  // per term, sorted by doc index

    std::unordered_map<std::string, std::uint32_t> doc_ids;
    std::unordered_map<std::string, std::uint32_t> term_ids;

    bool has_doc(const std::string& doc_id) const { return doc_ids.count(doc_id) != 0; }
    std::uint64_t total_hits() const;
    bool operator==(const InvertedIndex& o) const {
        return snapshot_width == o.snapshot_width && snapshot_height == o.snapshot_height &&
               docs == o.docs && terms == o.terms && postings == o.postings;
    }
};

// Lowercase and split on non-alphanumeric characters.
std::vector<std::string> tokenize(const std::string& text);
std::string normalize_term(const std::string& term);

InvertedIndex build_index(const std::vector<IndexableDoc>& docs, std::uint32_t snapshot_width,
                          std::uint32_t snapshot_height);

// Empty for unknown terms; term matching is case-insensitive.
const std::vector<PostingEntry>& lookup(const InvertedIndex& index, const std::string& term);

// Deduplicated union of the rects of all query terms occurring in doc_id,
// in a deterministic order.
std::vector<HighlightRect> merge_query(const InvertedIndex& index,
                                       const std::vector<std::string>& query_terms,
                                       const std::string& doc_id);

// Overlay the merged rects onto the stored query-independent snapshot.
RawSnapshot reconstruct_query_dependent(const InvertedIndex& index, const std::string& doc_id,
                                        const std::vector<std::string>& query_terms,
                                        const RawSnapshot& qi_snapshot,
                                        Rgb color = kHighlightColor);

std::vector<std::uint8_t> serialize_index(const InvertedIndex& index);
InvertedIndex deserialize_index(const std::vector<std::uint8_t>& bytes);
void save_index_file(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index_file(const std::string& path);

}  // namespace vip
