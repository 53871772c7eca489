#include "ctxrw/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "ctxrw/error.hpp"

namespace ctxrw {

TokenizeMode parse_tokenize_mode(std::string_view name) {
  if (name == "whitespace") return TokenizeMode::Whitespace;
  if (name == "char") return TokenizeMode::Char;
  throw Error("unknown tokenize mode: " + std::string(name));
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

Tokens tokenize(std::string_view text, TokenizeMode mode) {
  Tokens out;
  std::size_t i = 0;
  if (mode == TokenizeMode::Whitespace) {
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) out.emplace_back(text.substr(start, i - start));
    }
  } else {
    while (i < text.size()) {
      if (is_space(text[i])) {
        ++i;
        continue;
      }
      const std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  return out;
}

std::string detokenize(const Tokens& tokens, TokenizeMode mode) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && mode == TokenizeMode::Whitespace) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens DialogueSession::flat_context() const {
  Tokens out;
  for (const auto& u : context) out.insert(out.end(), u.begin(), u.end());
  return out;
}

namespace {

Tokens parse_utterance(const nlohmann::json& v, const char* field, std::size_t line, const LoadOptions& opts,
                       bool& too_long) {
  if (!v.is_string()) throw ParseError(std::string("field '") + field + "' must be a string", line);
  Tokens t = tokenize(v.get<std::string>(), opts.mode);
  if (t.empty()) throw ParseError(std::string("empty utterance in field '") + field + "'", line);
  if (opts.max_len > 0 && t.size() > opts.max_len) too_long = true;
  return t;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open session file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record is not an object", lineno);
    fn(rec, lineno);
  }
}

bool parse_session(const nlohmann::json& rec, std::size_t lineno, const LoadOptions& opts, DialogueSession& s) {
  for (const char* key : {"context", "last", "response"})
    if (!rec.contains(key)) throw ParseError(std::string("missing field '") + key + "'", lineno);
  const auto& ctx = rec["context"];
  if (!ctx.is_array()) throw ParseError("field 'context' must be an array of strings", lineno);
  if (ctx.empty()) throw ParseError("field 'context' is empty", lineno);
  bool too_long = false;
  for (const auto& u : ctx) s.context.push_back(parse_utterance(u, "context", lineno, opts, too_long));
  s.last = parse_utterance(rec["last"], "last", lineno, opts, too_long);
  s.response = parse_utterance(rec["response"], "response", lineno, opts, too_long);
  if (too_long) {
    spdlog::warn("line {}: utterance longer than {} tokens, session skipped", lineno, opts.max_len);
    return false;
  }
  if (opts.max_turns > 0) s = truncate_context(s, opts.max_turns);
  return true;
}

}  // namespace

std::vector<DialogueSession> load_sessions(const std::filesystem::path& path, const LoadOptions& opts) {
  std::vector<DialogueSession> out;
  for_each_record(path, [&](const nlohmann::json& rec, std::size_t lineno) {
    DialogueSession s;
    if (parse_session(rec, lineno, opts, s)) out.push_back(std::move(s));
  });
  return out;
}

std::vector<PseudoQuadruplet> load_quadruplets(const std::filesystem::path& path, const LoadOptions& opts) {
  std::vector<PseudoQuadruplet> out;
  for_each_record(path, [&](const nlohmann::json& rec, std::size_t lineno) {
    if (!rec.contains("rewritten")) throw ParseError("missing field 'rewritten'", lineno);
    PseudoQuadruplet q;
    bool too_long = false;
    q.rewritten = parse_utterance(rec["rewritten"], "rewritten", lineno, opts, too_long);
    if (!parse_session(rec, lineno, opts, q.session)) return;
    out.push_back(std::move(q));
  });
  return out;
}

nlohmann::json session_to_json(const DialogueSession& s, TokenizeMode mode) {
  nlohmann::json j;
  j["context"] = nlohmann::json::array();
  for (const auto& u : s.context) j["context"].push_back(detokenize(u, mode));
  j["last"] = detokenize(s.last, mode);
  j["response"] = detokenize(s.response, mode);
  return j;
}

void write_sessions(const std::filesystem::path& path, const std::vector<DialogueSession>& sessions,
                    TokenizeMode mode) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write: " + path.string());
  for (const auto& s : sessions) os << session_to_json(s, mode).dump() << '\n';
}

void write_quadruplets(const std::filesystem::path& path, const std::vector<PseudoQuadruplet>& quads,
                       TokenizeMode mode) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write: " + path.string());
  for (const auto& q : quads) {
    auto j = session_to_json(q.session, mode);
    j["rewritten"] = detokenize(q.rewritten, mode);
    os << j.dump() << '\n';
  }
}

DialogueSession truncate_context(const DialogueSession& session, std::size_t max_turns) {
  if (max_turns == 0) throw Error("truncate_context: max_turns must be >= 1");
  const std::size_t keep = std::max<std::size_t>(1, max_turns - 1);
  DialogueSession out = session;
  if (out.context.size() > keep)
    out.context.erase(out.context.begin(), out.context.end() - static_cast<std::ptrdiff_t>(keep));
  return out;
}

// ---- Vocab ----------------------------------------------------------------

namespace {
const char* const kReservedTokens[Vocab::kReserved] = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocab::Vocab() {
  for (const char* t : kReservedTokens) push(t);
}

void Vocab::push(const std::string& token) {
  if (index_.count(token)) throw Error("duplicate vocabulary token: " + token);
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::from_counts(const std::unordered_map<std::string, std::size_t>& counts, std::size_t max_size,
                         std::size_t min_count) {
  if (max_size < static_cast<std::size_t>(kReserved))
    throw Error("build_vocab: max_size " + std::to_string(max_size) + " cannot hold the 4 reserved tokens");
  std::vector<std::pair<std::string, std::size_t>> items;
  for (const auto& [tok, n] : counts)
    if (n >= min_count && n > 0) items.emplace_back(tok, n);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : items) {
    if (v.tokens_.size() >= max_size) break;
    if (v.contains(tok)) continue;  // a corpus token spelled like a reserved one
    v.push(tok);
  }
  return v;
}

Vocab Vocab::build(const std::vector<DialogueSession>& corpus, std::size_t max_size, std::size_t min_count) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& u : s.context)
      for (const auto& t : u) ++counts[t];
    for (const auto& t : s.last) ++counts[t];
    for (const auto& t : s.response) ++counts[t];
  }
  return from_counts(counts, max_size, min_count);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) v.push(t);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocab file: " + path.string());
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) toks.push_back(line);
  return from_tokens(toks);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write vocab file: " + path.string());
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw Error("vocab id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::entries() const {
  return {tokens_.begin() + kReserved, tokens_.end()};
}

Encoded encode(const Tokens& tokens, const Vocab& vocab, const Tokens* copy_source) {
  Encoded e;
  std::unordered_map<std::string, int> ext;
  if (copy_source) {
    for (const auto& t : *copy_source) {
      if (vocab.contains(t) || ext.count(t)) continue;
      ext.emplace(t, vocab.size() + static_cast<int>(e.oov.size()));
      e.oov.push_back(t);
    }
  }
  e.ids.reserve(tokens.size());
  e.extended.reserve(tokens.size());
  for (const auto& t : tokens) {
    const int id = vocab.id(t);
    e.ids.push_back(id);
    if (id == Vocab::kUnk && t != vocab.token(Vocab::kUnk)) {
      auto it = ext.find(t);
      e.extended.push_back(it == ext.end() ? id : it->second);
    } else {
      e.extended.push_back(id);
    }
  }
  return e;
}

Tokens decode(const std::vector<int>& ids, const Vocab& vocab, const Tokens& oov) {
  Tokens out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= vocab.size()) {
      const auto k = static_cast<std::size_t>(id - vocab.size());
      if (k >= oov.size()) throw Error("extended id " + std::to_string(id) + " has no source token");
      out.push_back(oov[k]);
    } else {
      out.push_back(vocab.token(id));
    }
  }
  return out;
}

}  // namespace ctxrw
