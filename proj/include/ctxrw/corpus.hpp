#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ctxrw {

using Tokens = std::vector<std::string>;

enum class TokenizeMode { Whitespace, Char };

TokenizeMode parse_tokenize_mode(std::string_view name);

/// Whitespace mode splits on runs of ASCII whitespace. Char mode yields one
/// token per non-space UTF-8 code point.
Tokens tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::Whitespace);

/// Inverse of tokenize for the given mode.
std::string detokenize(const Tokens& tokens, TokenizeMode mode = TokenizeMode::Whitespace);

/// One multi-turn sample: context utterances c, last utterance q, response r.
struct DialogueSession {
  std::vector<Tokens> context;
  Tokens last;
  Tokens response;

  /// Context utterances concatenated in order.
  Tokens flat_context() const;
  bool operator==(const DialogueSession&) const = default;
};

/// A session plus its synthesized rewritten last utterance q*.
struct PseudoQuadruplet {
  DialogueSession session;
  Tokens rewritten;
};

struct LoadOptions {
  TokenizeMode mode = TokenizeMode::Whitespace;
  std::size_t max_len = 30;
  /// Truncation applied after parsing; 0 disables it.
  std::size_t max_turns = 0;
};

/// Reads a JSONL session file. Throws ParseError (with line number) on
/// malformed records or empty utterances; sessions containing an utterance
/// longer than max_len are skipped with a warning.
std::vector<DialogueSession> load_sessions(const std::filesystem::path& path, const LoadOptions& opts = {});

/// Same as load_sessions but every record must also carry "rewritten".
std::vector<PseudoQuadruplet> load_quadruplets(const std::filesystem::path& path, const LoadOptions& opts = {});

nlohmann::json session_to_json(const DialogueSession& s, TokenizeMode mode = TokenizeMode::Whitespace);
void write_sessions(const std::filesystem::path& path, const std::vector<DialogueSession>& sessions,
                    TokenizeMode mode = TokenizeMode::Whitespace);
void write_quadruplets(const std::filesystem::path& path, const std::vector<PseudoQuadruplet>& quads,
                       TokenizeMode mode = TokenizeMode::Whitespace);

/// Keeps the most recent (max_turns − 1) context utterances. With
/// max_turns == 1 at least one context utterance is still retained so the
/// session stays well-formed.
DialogueSession truncate_context(const DialogueSession& session, std::size_t max_turns);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocab();

  /// Tokens sorted by (count desc, token asc); tokens below min_count are
  /// dropped; the result holds at most max_size entries including the four
  /// reserved ones.
  static Vocab build(const std::vector<DialogueSession>& corpus, std::size_t max_size, std::size_t min_count = 1);
  /// Builds from explicit token counts with the same ordering rule.
  static Vocab from_counts(const std::unordered_map<std::string, std::size_t>& counts, std::size_t max_size,
                           std::size_t min_count = 1);
  /// Non-reserved tokens in id order.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  /// Plain text, one non-reserved token per line; line i holds id i + 4.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  /// Non-reserved tokens in id order.
  std::vector<std::string> entries() const;

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Result of encoding a token list against a vocabulary.
struct Encoded {
  /// Base ids; out-of-vocabulary tokens map to UNK.
  std::vector<int> ids;
  /// Same as ids, except out-of-vocabulary tokens present in the copy source
  /// carry their extended id (>= |vocab|).
  std::vector<int> extended;
  /// Extended-vocabulary table: oov[k] has id |vocab| + k. Ordered by first
  /// occurrence in the copy source.
  Tokens oov;
};

Encoded encode(const Tokens& tokens, const Vocab& vocab, const Tokens* copy_source = nullptr);

/// Maps ids back to surface tokens, resolving extended ids through `oov`.
Tokens decode(const std::vector<int>& ids, const Vocab& vocab, const Tokens& oov = {});

}  // namespace ctxrw
