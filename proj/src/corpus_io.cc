// Copyright 2026 The dpkps Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dpkps/corpus_io.h"

#include <fstream>
#include <utility>

#include "absl/container/flat_hash_set.h"
#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "dpkps/status_macros.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;

bool IsUnicodeSpace(uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d: case 0x20:
    case 0x85: case 0xa0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202f: case 0x205f: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

// Decodes the code point at `pos`, returning its byte length. Malformed
// sequences are consumed one byte at a time as opaque code points.
int DecodeUtf8(std::string_view s, size_t pos, uint32_t* cp) {
  const unsigned char c = s[pos];
  int len = 1;
  uint32_t value = c;
  if (c >= 0xf0 && c < 0xf8) {
    len = 4;
    value = c & 0x07;
  } else if (c >= 0xe0) {
    len = 3;
    value = c & 0x0f;
  } else if (c >= 0xc0) {
    len = 2;
    value = c & 0x1f;
  }
  if (len == 1 || pos + len > s.size()) {
    *cp = c;
    return 1;
  }
  for (int i = 1; i < len; ++i) {
    const unsigned char cc = s[pos + i];
    if ((cc & 0xc0) != 0x80) {
      *cp = c;
      return 1;
    }
    value = (value << 6) | (cc & 0x3f);
  }
  *cp = value;
  return len;
}

std::string NormalizeToken(std::string_view raw) {
  size_t begin = 0;
  size_t end = raw.size();
  while (begin < end && absl::ascii_ispunct(raw[begin])) ++begin;
  while (end > begin && absl::ascii_ispunct(raw[end - 1])) --end;
  std::string token(raw.substr(begin, end - begin));
  absl::AsciiStrToLower(&token);
  return token;
}

std::string NormalizePhrase(std::string_view phrase, int* words) {
  const std::vector<std::string> tokens = Tokenize(phrase);
  *words = static_cast<int>(tokens.size());
  return absl::StrJoin(tokens, " ");
}

absl::Status LineError(int line_no, std::string_view what) {
  return absl::InvalidArgumentError(
      absl::StrCat("line ", line_no, ": ", std::string(what)));
}

absl::StatusOr<std::string> RequireString(const json& obj, const char* key,
                                          int line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    return LineError(line_no, absl::StrCat("missing \"", key, "\" field"));
  }
  if (!it->is_string()) {
    return LineError(line_no, absl::StrCat("\"", key, "\" must be a string"));
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  size_t start = 0;
  size_t pos = 0;
  auto flush = [&](size_t end) {
    if (end > start) {
      std::string token = NormalizeToken(text.substr(start, end - start));
      if (!token.empty()) tokens.push_back(std::move(token));
    }
  };
  while (pos < text.size()) {
    uint32_t cp;
    const int len = DecodeUtf8(text, pos, &cp);
    if (IsUnicodeSpace(cp)) {
      flush(pos);
      start = pos + len;
    }
    pos += len;
  }
  flush(text.size());
  return tokens;
}

absl::StatusOr<PublicVocabulary> PublicVocabulary::FromTerms(
    const std::vector<std::string>& terms, int max_words) {
  if (max_words < 1) {
    return absl::InvalidArgumentError("max_words must be >= 1");
  }
  PublicVocabulary vocab;
  vocab.max_words_ = max_words;
  for (size_t i = 0; i < terms.size(); ++i) {
    int words = 0;
    std::string normalized = NormalizePhrase(terms[i], &words);
    if (normalized.empty()) continue;
    if (words > max_words) {
      return absl::InvalidArgumentError(
          absl::StrCat("term \"", normalized, "\" (entry ", i + 1, ") has ",
                       words, " words; max_words is ", max_words));
    }
    const TermId id = static_cast<TermId>(vocab.terms_.size());
    if (vocab.index_.try_emplace(normalized, id).second) {
      vocab.terms_.push_back(std::move(normalized));
    }
  }
  return vocab;
}

std::optional<TermId> PublicVocabulary::Find(
    std::string_view normalized_term) const {
  auto it = index_.find(std::string(normalized_term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

absl::StatusOr<std::vector<Document>> ParseCorpus(std::istream& in) {
  std::vector<Document> docs;
  absl::flat_hash_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (absl::StripAsciiWhitespace(line).empty()) {
      return LineError(line_no, "empty line");
    }
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      return LineError(line_no, "not a JSON object");
    }
    Document doc;
    DPKPS_ASSIGN_OR_RETURN(doc.id, RequireString(obj, "id", line_no));
    DPKPS_ASSIGN_OR_RETURN(doc.text, RequireString(obj, "text", line_no));
    DPKPS_ASSIGN_OR_RETURN(doc.label, RequireString(obj, "label", line_no));
    if (doc.text.empty()) return LineError(line_no, "empty text");
    if (!seen.insert(doc.id).second) {
      return LineError(line_no, absl::StrCat("duplicate id \"", doc.id, "\""));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

absl::StatusOr<std::vector<Document>> LoadCorpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  auto docs = ParseCorpus(in);
  if (!docs.ok()) {
    return absl::Status(docs.status().code(),
                        absl::StrCat(path, ": ", docs.status().message()));
  }
  return docs;
}

void WriteCorpus(const std::vector<Document>& docs, std::ostream& out) {
  for (const Document& doc : docs) {
    out << json{{"id", doc.id}, {"text", doc.text}, {"label", doc.label}}.dump()
        << '\n';
  }
}

absl::StatusOr<PublicVocabulary> ParseVocabulary(std::istream& in,
                                                 int max_words) {
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) terms.push_back(line);
  return PublicVocabulary::FromTerms(terms, max_words);
}

absl::StatusOr<PublicVocabulary> LoadVocabulary(const std::string& path,
                                                int max_words) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return ParseVocabulary(in, max_words);
}

ExtractedSequence ExtractTerms(const Document& doc,
                               const PublicVocabulary& vocab, int limit) {
  ExtractedSequence out{.doc_id = doc.id, .term_ids = {}, .label = doc.label};
  const std::vector<std::string> tokens = Tokenize(doc.text);
  size_t pos = 0;
  std::string key;
  while (pos < tokens.size() && static_cast<int>(out.term_ids.size()) < limit) {
    const size_t longest =
        std::min<size_t>(vocab.max_words(), tokens.size() - pos);
    size_t matched = 0;
    for (size_t len = longest; len >= 1; --len) {
      key.clear();
      for (size_t i = 0; i < len; ++i) {
        if (i > 0) key.push_back(' ');
        key.append(tokens[pos + i]);
      }
      if (auto id = vocab.Find(key)) {
        out.term_ids.push_back(*id);
        matched = len;
        break;
      }
    }
    pos += matched > 0 ? matched : 1;
  }
  return out;
}

void WriteExtracted(const std::vector<ExtractedSequence>& sequences,
                    const PublicVocabulary& vocab, std::ostream& out) {
  for (const ExtractedSequence& seq : sequences) {
    json terms = json::array();
    for (TermId id : seq.term_ids) terms.push_back(vocab.term(id));
    out << json{{"id", seq.doc_id}, {"label", seq.label}, {"terms", terms}}
               .dump()
        << '\n';
  }
}

absl::StatusOr<std::vector<ExtractedSequence>> ParseExtracted(
    std::istream& in, const PublicVocabulary& vocab, bool drop_unknown) {
  std::vector<ExtractedSequence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (absl::StripAsciiWhitespace(line).empty()) continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      return LineError(line_no, "not a JSON object");
    }
    ExtractedSequence seq;
    DPKPS_ASSIGN_OR_RETURN(seq.doc_id, RequireString(obj, "id", line_no));
    DPKPS_ASSIGN_OR_RETURN(seq.label, RequireString(obj, "label", line_no));
    auto terms = obj.find("terms");
    if (terms == obj.end() || !terms->is_array()) {
      return LineError(line_no, "missing \"terms\" array");
    }
    for (const json& t : *terms) {
      if (!t.is_string()) return LineError(line_no, "non-string term");
      int words = 0;
      const std::string normalized =
          NormalizePhrase(t.get<std::string>(), &words);
      if (auto id = vocab.Find(normalized)) {
        seq.term_ids.push_back(*id);
      } else if (!drop_unknown) {
        return LineError(line_no,
                         absl::StrCat("term \"", normalized,
                                      "\" is not in the vocabulary"));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

absl::StatusOr<std::vector<ExtractedSequence>> LoadExtracted(
    const std::string& path, const PublicVocabulary& vocab, bool drop_unknown) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return ParseExtracted(in, vocab, drop_unknown);
}

}  // namespace dpkps
