#include "ctxrw/lm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctxrw/error.hpp"

namespace ctxrw::lm {

namespace {

constexpr const char* kDumpMagic = "ctxrw-ngram 1";

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = key.find(' ', start)) != std::string::npos; start = pos + 1)
    out.push_back(key.substr(start, pos - start));
  out.push_back(key.substr(start));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::size_t from, std::size_t to) {
  std::string s;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) s += ' ';
    s += parts[i];
  }
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string NgramLM::key(const std::vector<std::string>& kgram) const { return join(kgram, 0, kgram.size()); }

NgramLM NgramLM::train(const std::vector<Tokens>& corpus, int order, double add_k) {
  if (order < 1) throw Error("train_ngram: order must be >= 1");
  if (!(add_k > 0.0)) throw Error("train_ngram: add_k must be > 0");
  if (corpus.empty()) throw Error("train_ngram: empty corpus");
  NgramLM lm(order, add_k);
  for (const auto& sent : corpus) {
    std::vector<std::string> padded(static_cast<std::size_t>(order - 1), kBos);
    padded.insert(padded.end(), sent.begin(), sent.end());
    padded.emplace_back(kEos);
    for (std::size_t k = 1; k <= static_cast<std::size_t>(order); ++k)
      for (std::size_t i = 0; i + k <= padded.size(); ++i) ++lm.counts_[join(padded, i, i + k)];
  }
  lm.rebuild_derived();
  return lm;
}

void NgramLM::merge(const NgramLM& other) {
  if (other.order_ != order_ || other.add_k_ != add_k_) throw Error("merge: models differ in order or add_k");
  for (const auto& [k, n] : other.counts_) counts_[k] += n;
  rebuild_derived();
}

void NgramLM::rebuild_derived() {
  history_totals_.clear();
  vocab_.clear();
  for (const auto& [k, n] : counts_) {
    const auto parts = split_key(k);
    if (parts.size() == 1 && parts[0] != kBos && parts[0] != kEos) vocab_.insert(parts[0]);
    if (parts.size() == static_cast<std::size_t>(order_))
      history_totals_[join(parts, 0, parts.size() - 1)] += n;
  }
}

std::size_t NgramLM::count(const std::vector<std::string>& kgram) const {
  auto it = counts_.find(key(kgram));
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::vector<std::string>> NgramLM::histories() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& [h, n] : history_totals_) out.push_back(h.empty() ? std::vector<std::string>{} : split_key(h));
  return out;
}

double NgramLM::prob(const std::vector<std::string>& history, const std::string& w) const {
  if (history.size() != static_cast<std::size_t>(order_ - 1))
    throw Error("prob: history must hold order-1 symbols");
  const std::string h = key(history);
  auto ht = history_totals_.find(h);
  const double total = ht == history_totals_.end() ? 0.0 : static_cast<double>(ht->second);
  std::string full = h.empty() ? w : h + ' ' + w;
  auto it = counts_.find(full);
  const double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return (c + add_k_) / (total + add_k_ * static_cast<double>(outcome_count()));
}

double NgramLM::log_prob(const Tokens& sentence) const {
  if (sentence.empty()) throw Error("log_prob: empty sentence");
  std::vector<std::string> seq(static_cast<std::size_t>(order_ - 1), kBos);
  for (const auto& t : sentence) seq.push_back(vocab_.count(t) ? t : std::string(kUnk));
  seq.emplace_back(kEos);
  double lp = 0.0;
  const auto h = static_cast<std::size_t>(order_ - 1);
  for (std::size_t i = h; i < seq.size(); ++i) {
    std::vector<std::string> hist(seq.begin() + static_cast<std::ptrdiff_t>(i - h),
                                  seq.begin() + static_cast<std::ptrdiff_t>(i));
    lp += std::log(prob(hist, seq[i]));
  }
  return lp;
}

double NgramLM::normalized_score(const Tokens& sentence) const {
  return log_prob(sentence) / static_cast<double>(sentence.size() + 1);
}

std::string NgramLM::dump() const {
  std::ostringstream os;
  os << kDumpMagic << '\n' << "order\t" << order_ << '\n' << "add_k\t" << format_double(add_k_) << '\n';
  for (const auto& [k, n] : counts_) os << k << '\t' << n << '\n';
  return os.str();
}

NgramLM NgramLM::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != kDumpMagic) throw ParseError("not an n-gram model dump", lineno);
  int order = 0;
  double k = 0.0;
  ++lineno;
  if (!std::getline(is, line) || line.rfind("order\t", 0) != 0) throw ParseError("missing order", lineno);
  order = std::stoi(line.substr(6));
  ++lineno;
  if (!std::getline(is, line) || line.rfind("add_k\t", 0) != 0) throw ParseError("missing add_k", lineno);
  const std::string ks = line.substr(6);
  std::from_chars(ks.data(), ks.data() + ks.size(), k);
  if (order < 1 || !(k > 0.0)) throw ParseError("invalid order or add_k", lineno);
  NgramLM lm(order, k);
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected k-gram<TAB>count", lineno);
    try {
      lm.counts_[line.substr(0, tab)] = static_cast<std::size_t>(std::stoull(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw ParseError("bad count", lineno);
    }
  }
  lm.rebuild_derived();
  return lm;
}

void NgramLM::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write model: " + path.string());
  os << dump();
}

NgramLM NgramLM::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace ctxrw::lm
