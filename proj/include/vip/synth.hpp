#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vip/snapshot.hpp"
#include "vip/tensor.hpp"

namespace vip {

enum class BlockKind : std::uint8_t { header, sidebar, body, ad };
std::string to_string(BlockKind k);

struct TokenBox {
    std::string text;
    HighlightRect rect;  // full line box; ink is drawn inset within it
};

struct LayoutBlock {
    BlockKind kind;
    std::uint32_t x0, y0, x1, y1;  // half-open bbox
    std::uint8_t background;       // gray value, >= 200
    std::vector<TokenBox> tokens;
};

struct LayoutSpec {
    std::uint32_t viewport_w = 1024;
    std::uint32_t viewport_h = 1024;
    std::vector<LayoutBlock> blocks;  // reading order: header, body, ad, sidebar
};

// A generated page: layout plus its query/grade assignment. Token offsets
// are positions in the concatenated block token streams.
struct PageDoc {
    std::string doc_id;
    std::string qid;
    int grade = 0;
    LayoutSpec layout;

    std::vector<const TokenBox*> token_stream() const;
    std::size_t field_length(BlockKind kind) const;  // ad counts toward body
};

// White page, light-gray blocks, dark ink rectangles for tokens.
RawSnapshot rasterize(const LayoutSpec& layout);

// Same, with every query-matched token's box highlighted via the overlay rule.
RawSnapshot rasterize_with_query(const LayoutSpec& layout,
                                 const std::vector<std::string>& query_terms,
                                 Rgb color = kHighlightColor);

std::vector<HighlightRect> matched_rects(const LayoutSpec& layout,
                                         const std::vector<std::string>& query_terms);

struct GenConfig {
    std::size_t n_queries = 200;
    std::size_t docs_per_query = 20;
    std::size_t vocab_size = 500;
    std::uint64_t seed = 1;
    std::uint32_t viewport = 1024;
    double frac_grade2 = 0.10;
    double frac_grade1 = 0.20;  // remainder is grade 0
    unsigned threads = 0;       // rasterize/write parallelism

    void validate() const;
};

struct GeneratedDataset {
    GenConfig config;
    std::map<std::string, std::vector<std::string>> queries;  // qid -> terms
    std::vector<PageDoc> docs;
};

// Deterministic corpus (no disk I/O).
GeneratedDataset generate_corpus(const GenConfig& config);

struct CorpusStats {
    std::size_t n_docs = 0;
    std::map<std::string, std::size_t> df;  // docs containing term
    double avg_len[4] = {0, 0, 0, 0};       // whole, header, body(+ad), sidebar
};

CorpusStats corpus_stats(const std::vector<PageDoc>& docs);

// 46 handcrafted lexical features: 7 per field (TF, TF/len, IDF, TF*IDF,
// length, coverage, BM25) over {whole page, header, body, sidebar}, zero
// padded. Match positions are deliberately not encoded.
Tensor compute_features(const std::vector<std::string>& query_terms, const PageDoc& doc,
                        const CorpusStats& stats);

// Writes manifest.tsv, queries.tsv, features.letor, qrels.txt, corpus.tokens
// and snapshots/<docid>.ppm under dir.
void write_dataset(const GeneratedDataset& data, const std::string& dir);

// generate_corpus + write_dataset.
void gen_dataset(const GenConfig& config, const std::string& dir);

}  // namespace vip
