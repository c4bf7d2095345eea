#include "vip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "vip/errors.hpp"
#include "vip/index.hpp"
#include "vip/io_util.hpp"
#include "vip/parallel.hpp"
#include "vip/rng.hpp"

namespace vip {

namespace fs = std::filesystem;

std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::header: return "header";
        case BlockKind::sidebar: return "sidebar";
        case BlockKind::body: return "body";
        case BlockKind::ad: return "ad";
    }
    return "?";
}

std::vector<const TokenBox*> PageDoc::token_stream() const {
    std::vector<const TokenBox*> out;
    for (const auto& block : layout.blocks)
        for (const auto& tok : block.tokens) out.push_back(&tok);
    return out;
}

std::size_t PageDoc::field_length(BlockKind kind) const {
    std::size_t n = 0;
    for (const auto& block : layout.blocks) {
        const BlockKind k = block.kind == BlockKind::ad ? BlockKind::body : block.kind;
        if (k == kind) n += block.tokens.size();
    }
    return n;
}

void GenConfig::validate() const {
    if (n_queries < 5) throw ConfigError("need at least 5 queries for cross-validation");
    if (docs_per_query < 8) throw ConfigError("need at least 8 docs per query");
    if (vocab_size < 20 || vocab_size > 1000)
        throw ConfigError("vocab_size must be in [20, 1000]");
    if (viewport < 256 || viewport > 4096) throw ConfigError("viewport must be in [256, 4096]");
    if (frac_grade2 <= 0 || frac_grade1 <= 0 || frac_grade2 + frac_grade1 >= 0.8)
        throw ConfigError("grade fractions must be positive and leave room for grade 0");
}

namespace {

constexpr std::uint8_t kInk = 38;
constexpr std::uint8_t kHeaderBg = 235;
constexpr std::uint8_t kBodyBg = 244;
constexpr std::uint8_t kSidebarBg = 228;
constexpr std::uint8_t kAdBg = 208;

// Page geometry, all derived from the viewport size.
struct Geometry {
    std::uint32_t V;
    std::uint32_t margin, hdr_y0, hdr_font, hdr_y1;
    std::uint32_t content_y0, content_y1;
    std::uint32_t main_x0, main_x1, side_x0, side_x1, side_y1;
    std::uint32_t body_font, body_pitch, ad_font, ad_pitch, side_font, side_pitch;
    std::uint32_t pad;

    explicit Geometry(std::uint32_t v) : V(v) {
        margin = V / 32;
        hdr_y0 = V / 42;
        hdr_font = V / 16;
        hdr_y1 = hdr_y0 + hdr_font + V / 64;
        content_y0 = hdr_y1 + V / 64;
        content_y1 = V - V / 16;
        main_x0 = margin;
        main_x1 = V * 21 / 32;
        side_x0 = V * 22 / 32;
        side_x1 = V - margin;
        side_y1 = content_y0 + (content_y1 - content_y0) * 5 / 8;
        body_font = V / 64;
        body_pitch = V / 40;
        ad_font = V / 56;
        ad_pitch = V / 44;
        side_font = V / 73;
        side_pitch = V / 42;
        pad = V / 128;
    }
};

std::string vocab_word(std::size_t i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "w%03zu", i);
    return buf;
}

// Fills one row of token boxes between x0 and x1 at the given baseline.
void fill_row(Rng& rng, LayoutBlock& block, std::uint32_t x0, std::uint32_t x1, std::uint32_t y,
              std::uint32_t font, std::size_t count, const std::vector<std::string>& filler) {
    const std::uint32_t char_w = std::max<std::uint32_t>(2, font * 3 / 5);
    const std::uint32_t gap = std::max<std::uint32_t>(2, font / 2);
    std::uint32_t x = x0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t jitter =
            static_cast<std::uint32_t>(rng.uniform_int(0, static_cast<std::int64_t>(char_w)));
        const std::uint32_t w = char_w * 4 + jitter;
        if (x + w >= x1) break;
        TokenBox tok;
        tok.text = filler[rng.bounded(filler.size())];
        tok.rect = {x, y, x + w - 1, y + font - 1};
        block.tokens.push_back(std::move(tok));
        x += w + gap;
    }
}

struct DocRecipe {
    int grade = 0;
    bool header_match = false;
    std::size_t body_matches = 0;
    std::size_t ad_matches = 0;
    std::size_t sidebar_matches = 0;
    bool messy = false;   // sparse body plus a prominent ad band
    bool ad_mid = false;  // ad band floats mid-column instead of at the bottom
    bool small_ad = false;
};

LayoutSpec build_layout(Rng& rng, const Geometry& g, const DocRecipe& recipe,
                        const std::vector<std::string>& query_terms,
                        const std::vector<std::string>& filler) {
    LayoutSpec layout;
    layout.viewport_w = g.V;
    layout.viewport_h = g.V;

    // Header.
    LayoutBlock header{BlockKind::header, g.main_x0, g.hdr_y0, g.side_x1, g.hdr_y1, kHeaderBg, {}};
    {
        const std::uint32_t y = g.hdr_y0 + g.pad / 2;
        if (recipe.header_match) {
            // Query terms lead the title, a couple of filler words follow.
            const std::uint32_t char_w = std::max<std::uint32_t>(2, g.hdr_font * 3 / 5);
            const std::uint32_t gap = std::max<std::uint32_t>(2, g.hdr_font / 2);
            std::uint32_t x = g.main_x0 + g.pad;
            for (const auto& term : query_terms) {
                const std::uint32_t w = char_w * 4;
                if (x + w >= g.side_x1 - g.pad) break;
                header.tokens.push_back({term, {x, y, x + w - 1, y + g.hdr_font - 1}});
                x += w + gap;
            }
            const std::size_t extra = static_cast<std::size_t>(rng.uniform_int(1, 2));
            for (std::size_t i = 0; i < extra; ++i) {
                const std::uint32_t w = char_w * 4;
                if (x + w >= g.side_x1 - g.pad) break;
                header.tokens.push_back(
                    {filler[rng.bounded(filler.size())], {x, y, x + w - 1, y + g.hdr_font - 1}});
                x += w + gap;
            }
        } else {
            fill_row(rng, header, g.main_x0 + g.pad, g.side_x1 - g.pad, y, g.hdr_font,
                     static_cast<std::size_t>(rng.uniform_int(2, 4)), filler);
        }
    }
    layout.blocks.push_back(std::move(header));

    // Main column: body rows around an optional ad band. The band sits at
    // the bottom or floats mid-column; its text reads the same either way.
    std::size_t ad_rows = 0;
    if (recipe.messy) ad_rows = static_cast<std::size_t>(rng.uniform_int(3, 5));
    else if (recipe.small_ad) ad_rows = static_cast<std::size_t>(rng.uniform_int(2, 3));

    std::uint32_t ad_y0 = g.content_y1, ad_y1 = g.content_y1;
    if (ad_rows > 0) {
        const std::uint32_t ad_h = static_cast<std::uint32_t>(ad_rows) * g.ad_pitch + g.pad;
        if (recipe.ad_mid) {
            ad_y0 = g.content_y0 + (g.content_y1 - g.content_y0) * 2 / 5;
            ad_y1 = ad_y0 + ad_h;
        } else {
            ad_y0 = g.content_y1 - ad_h;
            ad_y1 = g.content_y1;
        }
    }

    // Body segments above and below the band.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> segments;
    if (ad_rows == 0) {
        segments.push_back({g.content_y0, g.content_y1});
    } else {
        if (ad_y0 > g.content_y0 + g.pad) segments.push_back({g.content_y0, ad_y0 - g.pad});
        if (ad_y1 + g.pad < g.content_y1) segments.push_back({ad_y1 + g.pad, g.content_y1});
    }
    const std::size_t want_rows = recipe.messy
                                      ? static_cast<std::size_t>(rng.uniform_int(14, 18))
                                      : static_cast<std::size_t>(rng.uniform_int(28, 34));
    std::size_t rows_left = want_rows;
    for (const auto& [seg_y0, seg_y1] : segments) {
        if (rows_left == 0) break;
        LayoutBlock body{BlockKind::body, g.main_x0, seg_y0, g.main_x1, seg_y1, kBodyBg, {}};
        for (std::size_t row = 0; rows_left > 0; ++row) {
            const std::uint32_t y = seg_y0 + g.pad + static_cast<std::uint32_t>(row) * g.body_pitch;
            if (y + g.body_font >= seg_y1) break;
            fill_row(rng, body, g.main_x0 + g.pad, g.main_x1 - g.pad, y, g.body_font,
                     static_cast<std::size_t>(rng.uniform_int(5, 9)), filler);
            --rows_left;
        }
        layout.blocks.push_back(std::move(body));
    }

    if (ad_rows > 0) {
        LayoutBlock ad{BlockKind::ad, g.main_x0, ad_y0, g.main_x1, ad_y1, kAdBg, {}};
        for (std::size_t row = 0; row < ad_rows; ++row) {
            const std::uint32_t y = ad_y0 + g.pad / 2 + static_cast<std::uint32_t>(row) * g.ad_pitch;
            if (y + g.ad_font >= ad_y1) break;
            fill_row(rng, ad, g.main_x0 + g.pad, g.main_x1 - g.pad, y, g.ad_font,
                     static_cast<std::size_t>(rng.uniform_int(5, 8)), filler);
        }
        layout.blocks.push_back(std::move(ad));
    }

    // Sidebar.
    LayoutBlock side{BlockKind::sidebar, g.side_x0, g.content_y0, g.side_x1, g.side_y1,
                     kSidebarBg, {}};
    for (std::size_t row = 0;; ++row) {
        const std::uint32_t y = g.content_y0 + g.pad + static_cast<std::uint32_t>(row) * g.side_pitch;
        if (y + g.side_font >= g.side_y1) break;
        fill_row(rng, side, g.side_x0 + g.pad, g.side_x1 - g.pad, y, g.side_font,
                 static_cast<std::size_t>(rng.uniform_int(1, 2)), filler);
    }
    layout.blocks.push_back(std::move(side));

    // Plant query matches by rewriting filler tokens in the target blocks.
    // Body matches skew toward the top of the page (F-pattern reading);
    // slots are in top-to-bottom reading order.
    auto plant = [&](BlockKind kind, std::size_t k, bool top_biased) {
        if (k == 0) return;
        std::vector<TokenBox*> slots;
        for (auto& block : layout.blocks)
            if (block.kind == kind)
                for (auto& tok : block.tokens) slots.push_back(&tok);
        if (slots.empty()) throw DataError("no slots available for query matches");
        k = std::min(k, slots.size());
        std::set<std::size_t> chosen;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t idx = 0;
            for (int attempt = 0; attempt < 64; ++attempt) {
                if (top_biased) {
                    const double u = rng.next_double();
                    idx = static_cast<std::size_t>(u * u * double(slots.size()));
                    if (idx >= slots.size()) idx = slots.size() - 1;
                } else {
                    idx = static_cast<std::size_t>(rng.bounded(slots.size()));
                }
                if (!chosen.count(idx)) break;
            }
            while (chosen.count(idx)) idx = (idx + 1) % slots.size();
            chosen.insert(idx);
            slots[idx]->text = query_terms[i % query_terms.size()];
        }
    };
    plant(BlockKind::body, recipe.body_matches, true);
    plant(BlockKind::ad, recipe.ad_matches, false);
    plant(BlockKind::sidebar, recipe.sidebar_matches, false);

    return layout;
}

void validate_layout(const LayoutSpec& layout) {
    for (std::size_t i = 0; i < layout.blocks.size(); ++i) {
        const auto& b = layout.blocks[i];
        if (b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > layout.viewport_w || b.y1 > layout.viewport_h)
            throw DataError("block outside viewport");
        for (std::size_t j = i + 1; j < layout.blocks.size(); ++j) {
            const auto& o = layout.blocks[j];
            const bool disjoint = b.x1 <= o.x0 || o.x1 <= b.x0 || b.y1 <= o.y0 || o.y1 <= b.y0;
            if (!disjoint)
                throw DataError("overlapping blocks: " + to_string(b.kind) + " and " +
                                to_string(o.kind));
        }
        for (const auto& tok : b.tokens)
            if (tok.rect.px < b.x0 || tok.rect.qx >= b.x1 || tok.rect.py < b.y0 ||
                tok.rect.qy >= b.y1)
                throw DataError("token outside its block");
    }
}

void fill_rect(RawSnapshot& img, std::uint32_t x0, std::uint32_t y0, std::uint32_t x1,
               std::uint32_t y1, std::uint8_t gray) {
    for (std::uint32_t y = y0; y < y1; ++y) {
        std::uint8_t* p = img.px(x0, y);
        for (std::uint32_t x = x0; x < x1; ++x) {
            p[0] = p[1] = p[2] = gray;
            p += 3;
        }
    }
}

}  // namespace

RawSnapshot rasterize(const LayoutSpec& layout) {
    validate_layout(layout);
    RawSnapshot img;
    img.width = layout.viewport_w;
    img.height = layout.viewport_h;
    img.pixels.assign(img.width * img.height * 3, 255);
    for (const auto& block : layout.blocks) {
        fill_rect(img, block.x0, block.y0, block.x1, block.y1, block.background);
        for (const auto& tok : block.tokens) {
            const std::uint32_t h = tok.rect.qy - tok.rect.py + 1;
            const std::uint32_t iy = h / 4;
            const std::uint32_t ix = std::max<std::uint32_t>(1, h / 8);
            if (tok.rect.px + ix > tok.rect.qx - ix || tok.rect.py + iy > tok.rect.qy - iy)
                continue;
            fill_rect(img, tok.rect.px + ix, tok.rect.py + iy, tok.rect.qx - ix + 1,
                      tok.rect.qy - iy + 1, kInk);
        }
    }
    return img;
}

std::vector<HighlightRect> matched_rects(const LayoutSpec& layout,
                                         const std::vector<std::string>& query_terms) {
    std::set<std::string> terms;
    for (const auto& t : query_terms) terms.insert(normalize_term(t));
    std::vector<HighlightRect> rects;
    for (const auto& block : layout.blocks)
        for (const auto& tok : block.tokens)
            if (terms.count(normalize_term(tok.text))) rects.push_back(tok.rect);
    return rects;
}

RawSnapshot rasterize_with_query(const LayoutSpec& layout,
                                 const std::vector<std::string>& query_terms, Rgb color) {
    return overlay_highlights(rasterize(layout), matched_rects(layout, query_terms), color);
}

GeneratedDataset generate_corpus(const GenConfig& config) {
    config.validate();
    GeneratedDataset data;
    data.config = config;
    Rng rng(config.seed, "synth");
    const Geometry geom(config.viewport);

    std::vector<std::string> vocab;
    vocab.reserve(config.vocab_size);
    for (std::size_t i = 0; i < config.vocab_size; ++i) vocab.push_back(vocab_word(i));

    const std::size_t D = config.docs_per_query;
    const auto n2 = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                 std::llround(config.frac_grade2 * D)));
    const auto n1 = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                 std::llround(config.frac_grade1 * D)));
    const std::size_t n0 = D - n2 - n1;

    for (std::size_t q = 0; q < config.n_queries; ++q) {
        const std::string qid = std::to_string(q + 1);
        // 2-3 distinct query terms.
        const std::size_t n_terms = static_cast<std::size_t>(rng.uniform_int(2, 3));
        std::set<std::string> term_set;
        while (term_set.size() < n_terms) term_set.insert(vocab[rng.bounded(vocab.size())]);
        std::vector<std::string> terms(term_set.begin(), term_set.end());
        data.queries[qid] = terms;

        std::vector<std::string> filler;
        filler.reserve(vocab.size());
        for (const auto& w : vocab)
            if (!term_set.count(w)) filler.push_back(w);

        std::vector<DocRecipe> recipes;
        for (std::size_t i = 0; i < n2; ++i) {
            DocRecipe r;
            r.grade = 2;
            r.header_match = true;
            r.body_matches = static_cast<std::size_t>(rng.uniform_int(5, 9));
            r.small_ad = rng.next_double() < 0.3;
            recipes.push_back(r);
        }
        for (std::size_t i = 0; i < n1; ++i) {
            DocRecipe r;
            r.grade = 1;
            const double tf_u = rng.next_double();
            r.body_matches = tf_u < 0.4 ? 1 : tf_u < 0.7 ? 2 : tf_u < 0.9 ? 3 : 4;
            r.messy = rng.next_double() < 0.6;
            if (r.messy) r.ad_mid = rng.next_double() < 0.1;
            else r.small_ad = rng.next_double() < 0.2;
            recipes.push_back(r);
        }
        for (std::size_t i = 0; i < n0; ++i) {
            DocRecipe r;
            r.grade = 0;
            if (i == 0) {
                // Sidebar confuser: clean page, matches only in the sidebar.
                r.sidebar_matches = static_cast<std::size_t>(rng.uniform_int(5, 15));
            } else if (i >= 1 && i <= 4) {
                // Ad confusers in the grade-1 TF range: feature twins of
                // messy grade-1 docs, distinguishable only by placement.
                r.messy = true;
                r.ad_mid = rng.next_double() < 0.5;
                r.ad_matches = static_cast<std::size_t>(rng.uniform_int(2, 4));
            } else if (i == 5) {
                // High-TF ad confuser (more hits than any grade-1 doc).
                r.messy = true;
                r.ad_mid = rng.next_double() < 0.5;
                r.ad_matches = static_cast<std::size_t>(rng.uniform_int(5, 12));
            } else {
                r.messy = rng.next_double() < 0.5;
                if (r.messy) r.ad_mid = rng.next_double() < 0.25;
            }
            recipes.push_back(r);
        }

        for (std::size_t d = 0; d < recipes.size(); ++d) {
            PageDoc doc;
            doc.qid = qid;
            doc.grade = recipes[d].grade;
            char buf[32];
            std::snprintf(buf, sizeof buf, "G%04zu-%02zu", q + 1, d + 1);
            doc.doc_id = buf;
            doc.layout = build_layout(rng, geom, recipes[d], terms, filler);
            data.docs.push_back(std::move(doc));
        }
    }
    return data;
}

CorpusStats corpus_stats(const std::vector<PageDoc>& docs) {
    CorpusStats stats;
    stats.n_docs = docs.size();
    double len_sum[4] = {0, 0, 0, 0};
    for (const auto& doc : docs) {
        std::set<std::string> seen;
        for (const auto& block : doc.layout.blocks)
            for (const auto& tok : block.tokens) seen.insert(normalize_term(tok.text));
        for (const auto& t : seen) stats.df[t] += 1;
        len_sum[0] += static_cast<double>(doc.token_stream().size());
        len_sum[1] += static_cast<double>(doc.field_length(BlockKind::header));
        len_sum[2] += static_cast<double>(doc.field_length(BlockKind::body));
        len_sum[3] += static_cast<double>(doc.field_length(BlockKind::sidebar));
    }
    for (int f = 0; f < 4; ++f)
        stats.avg_len[f] = stats.n_docs > 0 ? len_sum[f] / static_cast<double>(stats.n_docs) : 0.0;
    return stats;
}

Tensor compute_features(const std::vector<std::string>& query_terms, const PageDoc& doc,
                        const CorpusStats& stats) {
    Tensor out({46});
    // Per-field term counts. Field order: whole, header, body (incl. ad,
    // which plain text extraction cannot tell apart), sidebar.
    auto field_of = [](BlockKind k) {
        switch (k) {
            case BlockKind::header: return 1;
            case BlockKind::body: return 2;
            case BlockKind::ad: return 2;
            case BlockKind::sidebar: return 3;
        }
        return 2;
    };
    std::vector<std::string> terms;
    for (const auto& t : query_terms) terms.push_back(normalize_term(t));

    double field_len[4] = {0, 0, 0, 0};
    std::map<std::string, double> counts[4];
    for (const auto& block : doc.layout.blocks) {
        const int f = field_of(block.kind);
        for (const auto& tok : block.tokens) {
            const std::string norm = normalize_term(tok.text);
            field_len[0] += 1;
            field_len[f] += 1;
            counts[0][norm] += 1;
            counts[f][norm] += 1;
        }
    }

    const double n_docs = static_cast<double>(stats.n_docs);
    for (int f = 0; f < 4; ++f) {
        double tf = 0, idf = 0, tfidf = 0, covered = 0, bm25 = 0;
        const double len = field_len[f];
        const double avg = stats.avg_len[f] > 0 ? stats.avg_len[f] : 1.0;
        for (const auto& t : terms) {
            auto cit = counts[f].find(t);
            const double c = cit == counts[f].end() ? 0.0 : cit->second;
            auto dit = stats.df.find(t);
            const double df = dit == stats.df.end() ? 0.0 : static_cast<double>(dit->second);
            const double idf_plain = std::log(1.0 + n_docs / (1.0 + df));
            const double idf_bm25 = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
            tf += c;
            idf += idf_plain;
            tfidf += c * idf_plain;
            if (c > 0) covered += 1;
            constexpr double k1 = 1.2, b = 0.75;
            bm25 += idf_bm25 * (c * (k1 + 1.0)) / (c + k1 * (1.0 - b + b * len / avg));
        }
        const double coverage = terms.empty() ? 0.0 : covered / static_cast<double>(terms.size());
        const std::size_t base = static_cast<std::size_t>(f) * 7;
        out[base + 0] = tf;
        out[base + 1] = len > 0 ? tf / len : 0.0;
        out[base + 2] = idf;
        out[base + 3] = tfidf;
        out[base + 4] = len;
        out[base + 5] = coverage;
        out[base + 6] = bm25;
    }
    return out;  // entries 28..45 stay zero
}

void write_dataset(const GeneratedDataset& data, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "snapshots");
    const CorpusStats stats = corpus_stats(data.docs);

    // Feature vectors are emitted query-level min-max normalized (the LETOR
    // 4.0 convention), so every dimension lands in [0, 1].
    std::vector<Tensor> features;
    features.reserve(data.docs.size());
    std::map<std::string, std::vector<std::size_t>> doc_idx_by_query;
    for (std::size_t i = 0; i < data.docs.size(); ++i) {
        const PageDoc& doc = data.docs[i];
        features.push_back(compute_features(data.queries.at(doc.qid), doc, stats));
        doc_idx_by_query[doc.qid].push_back(i);
    }
    for (const auto& [qid, idx] : doc_idx_by_query) {
        const std::size_t dim = features[idx.front()].size();
        for (std::size_t f = 0; f < dim; ++f) {
            double lo = features[idx.front()][f], hi = lo;
            for (std::size_t i : idx) {
                lo = std::min(lo, features[i][f]);
                hi = std::max(hi, features[i][f]);
            }
            const double range = hi - lo;
            for (std::size_t i : idx)
                features[i][f] = range > 0.0 ? (features[i][f] - lo) / range : 0.0;
        }
    }

    // Snapshots (query-independent renders), parallel across docs.
    parallel_for(data.docs.size(), data.config.threads, [&](std::size_t i) {
        const PageDoc& doc = data.docs[i];
        const RawSnapshot img = rasterize(doc.layout);
        const auto bytes = save_ppm(img);
        atomic_write_file((fs::path(dir) / "snapshots" / (doc.doc_id + ".ppm")).string(),
                          std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                           bytes.size()));
    });

    std::ostringstream manifest, letor, qrels, tokens, queries;
    char buf[64];
    for (std::size_t di = 0; di < data.docs.size(); ++di) {
        const PageDoc& doc = data.docs[di];
        manifest << doc.doc_id << "\t" << doc.qid << "\t" << doc.grade << "\tsnapshots/"
                 << doc.doc_id << ".ppm\n";
        qrels << doc.qid << " 0 " << doc.doc_id << " " << doc.grade << "\n";

        const Tensor& feats = features[di];
        letor << doc.grade << " qid:" << doc.qid;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f", feats[i]);
            letor << " " << (i + 1) << ":" << buf;
        }
        letor << " #docid=" << doc.doc_id << "\n";

        std::uint32_t offset = 0;
        for (const TokenBox* tok : doc.token_stream()) {
            tokens << doc.doc_id << "\t" << tok->text << "\t" << offset << "\t" << tok->rect.px
                   << "\t" << tok->rect.py << "\t" << tok->rect.qx << "\t" << tok->rect.qy
                   << "\n";
            ++offset;
        }
    }
    for (const auto& [qid, terms] : data.queries) {
        queries << qid << "\t";
        for (std::size_t i = 0; i < terms.size(); ++i) queries << (i ? " " : "") << terms[i];
        queries << "\n";
    }

    atomic_write_file((fs::path(dir) / "manifest.tsv").string(), manifest.str());
    atomic_write_file((fs::path(dir) / "features.letor").string(), letor.str());
    atomic_write_file((fs::path(dir) / "qrels.txt").string(), qrels.str());
    atomic_write_file((fs::path(dir) / "corpus.tokens").string(), tokens.str());
    atomic_write_file((fs::path(dir) / "queries.tsv").string(), queries.str());
}

void gen_dataset(const GenConfig& config, const std::string& dir) {
    write_dataset(generate_corpus(config), dir);
}

}  // namespace vip
