#include "vip/index.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "vip/errors.hpp"
#include "vip/io_util.hpp"

namespace vip {

std::string normalize_term(const std::string& term) {
    std::string out;
    out.reserve(term.size());
    for (char c : term)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::uint64_t InvertedIndex::total_hits() const {
    std::uint64_t n = 0;
    for (const auto& plist : postings)
        for (const auto& entry : plist) n += entry.hits.size();
    return n;
}

InvertedIndex build_index(const std::vector<IndexableDoc>& docs, std::uint32_t snapshot_width,
                          std::uint32_t snapshot_height) {
    InvertedIndex index;
    index.snapshot_width = snapshot_width;
    index.snapshot_height = snapshot_height;

    index.docs.reserve(docs.size());
    for (const auto& d : docs) index.docs.push_back(d.doc_id);
    std::sort(index.docs.begin(), index.docs.end());
    for (std::size_t i = 1; i < index.docs.size(); ++i)
        if (index.docs[i] == index.docs[i - 1])
            throw DataError("duplicate doc_id in corpus: " + index.docs[i]);
    for (std::uint32_t i = 0; i < index.docs.size(); ++i) index.doc_ids[index.docs[i]] = i;

    // term -> doc index -> hits
    std::map<std::string, std::map<std::uint32_t, std::vector<TokenHit>>> acc;
    for (const auto& d : docs) {
        const std::uint32_t di = index.doc_ids.at(d.doc_id);
        for (const auto& tok : d.tokens) {
            if (tok.rect.qx >= snapshot_width || tok.rect.qy >= snapshot_height ||
                tok.rect.px > tok.rect.qx || tok.rect.py > tok.rect.qy)
                throw DataError("token rect out of snapshot bounds in doc " + d.doc_id);
            acc[normalize_term(tok.text)][di].push_back({tok.offset, tok.rect});
        }
    }

    index.terms.reserve(acc.size());
    index.postings.reserve(acc.size());
    for (auto& [term, by_doc] : acc) {
        index.term_ids[term] = static_cast<std::uint32_t>(index.terms.size());
        index.terms.push_back(term);
        std::vector<PostingEntry> plist;
        plist.reserve(by_doc.size());
        for (auto& [di, hits] : by_doc) {
            std::sort(hits.begin(), hits.end(),
                      [](const TokenHit& a, const TokenHit& b) { return a.offset < b.offset; });
            for (std::size_t i = 1; i < hits.size(); ++i)
                if (hits[i].offset == hits[i - 1].offset)
                    throw DataError("duplicate token offset " + std::to_string(hits[i].offset) +
                                    " for term '" + term + "' in doc " + index.docs[di]);
            plist.push_back({di, std::move(hits)});
        }
        index.postings.push_back(std::move(plist));
    }
    return index;
}

const std::vector<PostingEntry>& lookup(const InvertedIndex& index, const std::string& term) {
    static const std::vector<PostingEntry> kEmpty;
    auto it = index.term_ids.find(normalize_term(term));
    return it == index.term_ids.end() ? kEmpty : index.postings[it->second];
}

std::vector<HighlightRect> merge_query(const InvertedIndex& index,
                                       const std::vector<std::string>& query_terms,
                                       const std::string& doc_id) {
    auto dit = index.doc_ids.find(doc_id);
    if (dit == index.doc_ids.end()) return {};
    const std::uint32_t di = dit->second;
    std::set<HighlightRect> rects;
    for (const auto& term : query_terms) {
        const auto& plist = lookup(index, term);
        auto pit = std::lower_bound(plist.begin(), plist.end(), di,
                                    [](const PostingEntry& e, std::uint32_t d) {
                                        return e.doc_index < d;
                                    });
        if (pit == plist.end() || pit->doc_index != di) continue;
        for (const auto& hit : pit->hits) rects.insert(hit.rect);
    }
    return {rects.begin(), rects.end()};
}

RawSnapshot reconstruct_query_dependent(const InvertedIndex& index, const std::string& doc_id,
                                        const std::vector<std::string>& query_terms,
                                        const RawSnapshot& qi_snapshot, Rgb color) {
    if (!index.has_doc(doc_id)) throw DataError("unknown doc_id: " + doc_id);
    return overlay_highlights(qi_snapshot, merge_query(index, query_terms, doc_id), color);
}

namespace {

constexpr char kMagic[8] = {'V', 'I', 'P', 'I', 'D', 'X', '1', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    std::uint32_t u32() {
        if (bytes.size() - pos < 4) throw FormatError("truncated index file", pos);
        std::uint32_t v = bytes[pos] | (bytes[pos + 1] << 8) | (bytes[pos + 2] << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (bytes.size() - pos < n) throw FormatError("truncated string in index file", pos);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_index(const InvertedIndex& index) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, index.snapshot_width);
    put_u32(out, index.snapshot_height);
    put_u32(out, static_cast<std::uint32_t>(index.docs.size()));
    for (const auto& d : index.docs) put_str(out, d);
    put_u32(out, static_cast<std::uint32_t>(index.terms.size()));
    for (std::size_t t = 0; t < index.terms.size(); ++t) {
        put_str(out, index.terms[t]);
        const auto& plist = index.postings[t];
        put_u32(out, static_cast<std::uint32_t>(plist.size()));
        for (const auto& entry : plist) {
            put_u32(out, entry.doc_index);
            put_u32(out, static_cast<std::uint32_t>(entry.hits.size()));
            for (const auto& hit : entry.hits) {
                put_u32(out, hit.offset);
                put_u32(out, hit.rect.px);
                put_u32(out, hit.rect.py);
                put_u32(out, hit.rect.qx);
                put_u32(out, hit.rect.qy);
            }
        }
    }
    return out;
}

InvertedIndex deserialize_index(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
        throw FormatError("bad index magic", 0);
    Reader r{bytes, 8};
    InvertedIndex index;
    index.snapshot_width = r.u32();
    index.snapshot_height = r.u32();
    const std::uint32_t n_docs = r.u32();
    index.docs.reserve(n_docs);
    for (std::uint32_t i = 0; i < n_docs; ++i) {
        index.docs.push_back(r.str());
        index.doc_ids[index.docs.back()] = i;
    }
    const std::uint32_t n_terms = r.u32();
    index.terms.reserve(n_terms);
    index.postings.reserve(n_terms);
    for (std::uint32_t t = 0; t < n_terms; ++t) {
        index.terms.push_back(r.str());
        index.term_ids[index.terms.back()] = t;
        const std::uint32_t n_postings = r.u32();
        std::vector<PostingEntry> plist;
        plist.reserve(n_postings);
        for (std::uint32_t p = 0; p < n_postings; ++p) {
            PostingEntry entry;
            entry.doc_index = r.u32();
            const std::uint32_t n_hits = r.u32();
            entry.hits.reserve(n_hits);
            for (std::uint32_t h = 0; h < n_hits; ++h) {
                TokenHit hit;
                hit.offset = r.u32();
                hit.rect.px = r.u32();
                hit.rect.py = r.u32();
                hit.rect.qx = r.u32();
                hit.rect.qy = r.u32();
                entry.hits.push_back(hit);
            }
            plist.push_back(std::move(entry));
        }
        index.postings.push_back(std::move(plist));
    }
    if (r.pos != bytes.size()) throw FormatError("trailing bytes in index file", r.pos);
    return index;
}

void save_index_file(const InvertedIndex& index, const std::string& path) {
    const auto bytes = serialize_index(index);
    atomic_write_file(path,
                      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

InvertedIndex load_index_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_index(bytes);
}

}  // namespace vip
