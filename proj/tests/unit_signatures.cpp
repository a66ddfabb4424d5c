#include <gtest/gtest.h>

#include <sys/stat.h>

#include <map>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "hostguard/signatures.hpp"

using namespace hostguard;
using namespace hostguard::signatures;

namespace {

const signature_set& seed() {
  static const signature_set s = load_signatures(hgtest::data_dir() / "signatures" / "seed.tsv");
  return s;
}

errc parse_error_code(const std::string& text) {
  try {
    parse_signatures(text);
  } catch (const error& e) {
    return e.code();
  }
  return errc::io_error;
}

std::string sample_for(const signature& s) {
  for (const char* ext : {".php", ".js", ".html"}) {
    auto p = hgtest::data_dir() / "samples" / (s.id + ext);
    if (fs::exists(p)) return hgtest::slurp(p);
  }
  return {};
}

}  // namespace

TEST(Signatures, SeedCorpusLoads) {
  const auto& set = seed();
  EXPECT_GE(set.signatures.size(), 12u);
  EXPECT_EQ(set.version, "seed-1");
  std::set<threat_class> classes;
  for (const auto& s : set.signatures) classes.insert(s.klass);
  EXPECT_EQ(classes.size(), 6u);
  for (const char* id : {"php.eval.b64", "php.eval.gzinflate", "js.coinhive.ctor", "html.meta.refresh.offsite"}) {
    EXPECT_NE(set.find(id), nullptr) << id;
  }
  auto raw = hgtest::slurp(hgtest::data_dir() / "signatures" / "seed.tsv");
  EXPECT_EQ(set.checksum, fnv1a64(as_bytes(raw)));
}

TEST(Signatures, OrderIsFileOrder) {
  auto set = parse_signatures("b\twebshell\tlow\t-\tbbb\tx\na\tminer\thigh\tcs\taaa\ty\n");
  ASSERT_EQ(set.signatures.size(), 2u);
  EXPECT_EQ(set.signatures[0].id, "b");
  EXPECT_EQ(set.signatures[1].id, "a");
  EXPECT_TRUE(set.signatures[0].pattern.case_insensitive());
  EXPECT_FALSE(set.signatures[1].pattern.case_insensitive());
}

TEST(Signatures, LoadErrors) {
  EXPECT_EQ(parse_error_code(""), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("# only a comment\n"), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("a\twebshell\tlow\t-\tx\n"), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("a\tworm\tlow\t-\tx\td\n"), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("a\twebshell\tsevere\t-\tx\td\n"), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("a\twebshell\tlow\tfast\tx\td\n"), errc::malformed_signature_file);
  EXPECT_EQ(parse_error_code("php.eval.b64\twebshell\tlow\t-\tx\td\nphp.eval.b64\twebshell\tlow\t-\ty\td\n"),
            errc::duplicate_id);
  EXPECT_EQ(parse_error_code("a\twebshell\tlow\t-\t(ab\td\n"), errc::pattern_compile_error);
  EXPECT_EQ(parse_error_code("a\twebshell\tlow\t-\t(a)\\1\td\n"), errc::pattern_compile_error);
  try {
    parse_signatures("ok\twebshell\tlow\t-\tx\td\nbad\n");
    FAIL();
  } catch (const error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_signatures("/nonexistent/sigs.tsv"), error);
}

TEST(Signatures, EvalBase64IsOneWebshellHit) {
  auto hits = scan_content("<?php eval(base64_decode('aGk=')); ?>", seed(), "t");
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].signature_id, "php.eval.b64");
  EXPECT_EQ(hits[0].klass, threat_class::webshell);
  EXPECT_EQ(hits[0].byte_offset, 6u);
  EXPECT_TRUE(scan_content(std::string_view{}, seed(), "t").empty());
}

TEST(Signatures, EveryExemplarHitsItsSignature) {
  for (const auto& s : seed().signatures) {
    auto content = sample_for(s);
    ASSERT_FALSE(content.empty()) << "no exemplar for " << s.id;
    auto hits = scan_content(content, seed(), s.id);
    bool found = std::any_of(hits.begin(), hits.end(), [&](auto& h) { return h.signature_id == s.id; });
    EXPECT_TRUE(found) << s.id;
  }
}

TEST(Signatures, HitInvariants) {
  for (const auto& s : seed().signatures) {
    auto content = sample_for(s);
    for (const auto& h : scan_content(content, seed(), s.id)) {
      EXPECT_LT(h.byte_offset, content.size());
      EXPECT_LE(h.matched_excerpt.size(), excerpt_limit);
      EXPECT_EQ(content.compare(h.byte_offset, h.matched_excerpt.size(), h.matched_excerpt), 0);
    }
  }
}

TEST(Signatures, MinerInJqueryName) {
  hgtest::temp_dir t;
  hgtest::write(t / "assets/js/jquery.min.js",
                hgtest::slurp(hgtest::data_dir() / "samples" / "js.coinhive.ctor.js"));
  auto r = scan_tree(t.path(), seed());
  ASSERT_FALSE(r.hits.empty());
  EXPECT_EQ(r.hits[0].file_path, "assets/js/jquery.min.js");
  EXPECT_EQ(r.hits[0].klass, threat_class::miner);
}

TEST(Signatures, BenignTreeHasNoHits) {
  hgtest::temp_dir t;
  auto files = hgtest::make_benign_tree(t.path());
  auto r = scan_tree(t.path(), seed());
  EXPECT_EQ(r.files_scanned + r.files_skipped.size(), files.size());
  for (const auto& h : r.hits) ADD_FAILURE() << h.signature_id << " on " << h.file_path;
  // PNG fixtures are binary; with no binary_ok signature they are skipped.
  for (const auto& s : r.files_skipped) EXPECT_EQ(s.reason, "binary_excluded") << s.path;
}

TEST(Signatures, PlantedLibrariesPhpInThreeDirs) {
  hgtest::temp_dir t;
  hgtest::make_benign_tree(t.path());
  auto shell = hgtest::slurp(hgtest::data_dir() / "samples" / "php.eval.b64.php");
  std::set<std::string> planted{"includes/libraries.php", "admin/libraries.php", "lib/vendor/libraries.php"};
  for (const auto& p : planted) hgtest::write(t / p, shell);
  auto r = scan_tree(t.path(), seed());
  EXPECT_EQ(r.hits.size(), 3u);
  std::set<std::string> hit_paths;
  for (const auto& h : r.hits) hit_paths.insert(h.file_path);
  EXPECT_EQ(hit_paths, planted);
}

TEST(Signatures, EmptyRootAndMissingRoot) {
  hgtest::temp_dir t;
  auto r = scan_tree(t.path(), seed());
  EXPECT_EQ(r.files_scanned, 0u);
  EXPECT_TRUE(r.hits.empty());
  try {
    scan_tree(t / "missing", seed());
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::root_not_found);
  }
}

TEST(Signatures, SkipReasons) {
  hgtest::temp_dir t;
  hgtest::write(t / "big.php", std::string(2048, 'a'));
  hgtest::write(t / "blob.bin", std::string("\0eval(base64_decode(", 20));
  hgtest::write(t / "locked.php", "eval(base64_decode(", 0000);
  fs::create_symlink(t / "big.php", t / "link.php");
  scan_limits lim;
  lim.max_file_bytes = 1024;
  auto r = scan_tree(t.path(), seed(), lim);
  std::map<std::string, std::string> reasons;
  for (auto& s : r.files_skipped) reasons[s.path] = s.reason;
  EXPECT_EQ(reasons["big.php"], "too_large");
  EXPECT_EQ(reasons["blob.bin"], "binary_excluded");
  EXPECT_EQ(reasons["link.php"], "symlink_not_followed");
  if (::geteuid() != 0) EXPECT_EQ(reasons["locked.php"], "unreadable");
  EXPECT_EQ(r.files_scanned + r.files_skipped.size(), 4u);
}

TEST(Signatures, IncludeExcludeGlobs) {
  hgtest::temp_dir t;
  hgtest::write(t / "a/x.php", "eval(base64_decode(");
  hgtest::write(t / "b/y.php", "eval(base64_decode(");
  hgtest::write(t / "b/z.js", "eval(base64_decode(");
  scan_limits lim;
  lim.include_globs = {"**/*.php"};
  lim.exclude_globs = {"a/**"};
  auto r = scan_tree(t.path(), seed(), lim);
  ASSERT_EQ(r.hits.size(), 1u);
  EXPECT_EQ(r.hits[0].file_path, "b/y.php");
}

TEST(Signatures, Determinism) {
  hgtest::temp_dir t;
  hgtest::make_benign_tree(t.path(), 11, 120, 30);
  for (auto name : {"php.eval.b64.php", "obf.base64.run.php", "js.miner.pool.js", "html.phish.bank.login.html"}) {
    hgtest::write(t / "includes" / name, hgtest::slurp(hgtest::data_dir() / "samples" / name));
  }
  scan_limits one;
  one.workers = 1;
  scan_limits many;
  many.workers = 8;
  auto a = scan_tree(t.path(), seed(), one).to_jsonl_stable();
  auto b = scan_tree(t.path(), seed(), many).to_jsonl_stable();
  auto c = scan_tree(t.path(), seed(), many).to_jsonl_stable();
  EXPECT_EQ(a, b);
  EXPECT_EQ(b, c);
  EXPECT_NE(a.find("\"type\":\"hit\""), std::string::npos);
}

TEST(Signatures, ReportJsonlShape) {
  hgtest::temp_dir t;
  hgtest::write(t / "x.php", "eval(base64_decode(");
  auto lines = split(scan_tree(t.path(), seed()).to_jsonl(), '\n');
  ASSERT_GE(lines.size(), 2u);
  EXPECT_NE(lines[0].find("\"type\":\"hit\""), std::string::npos);
  EXPECT_NE(lines[1].find("\"type\":\"summary\""), std::string::npos);
  EXPECT_NE(lines[1].find("duration_ms"), std::string::npos);
}

// Hits in C equal hits in pad+C+pad shifted by the pad length. Padding is
// newlines so no word boundary or multi-byte construct straddles the seam.
TEST(Signatures, PurityUnderEmbedding) {
  std::mt19937_64 rng(99);
  for (const auto& s : seed().signatures) {
    auto c = sample_for(s);
    auto base = scan_content(c, seed(), "o");
    for (int trial = 0; trial < 3; ++trial) {
      std::size_t k = rng() % 5000;
      std::string big = std::string(k, '\n') + c + std::string(rng() % 300, '\n');
      auto shifted = scan_content(big, seed(), "o");
      ASSERT_EQ(shifted.size(), base.size()) << s.id;
      for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_EQ(shifted[i].signature_id, base[i].signature_id);
        EXPECT_EQ(shifted[i].byte_offset, base[i].byte_offset + k);
        EXPECT_EQ(shifted[i].matched_excerpt, base[i].matched_excerpt);
      }
    }
  }
}

TEST(Signatures, MonotonicUnderAddition) {
  std::string all;
  for (const auto& s : seed().signatures) all += sample_for(s) + "\n";
  signature_set partial;
  for (const auto& s : seed().signatures) {
    auto before = scan_content(all, partial, "o");
    partial.signatures.push_back(s);
    auto after = scan_content(all, partial, "o");
    for (const auto& h : before) {
      bool kept = std::any_of(after.begin(), after.end(), [&](auto& a) {
        return a.signature_id == h.signature_id && a.byte_offset == h.byte_offset;
      });
      EXPECT_TRUE(kept) << h.signature_id << "@" << h.byte_offset;
    }
  }
}

TEST(Signatures, MaxTargetBytes) {
  auto set = parse_signatures("x\twebshell\tlow\tmax=10\tneedle\td\n");
  EXPECT_EQ(scan_content("needle", set, "o").size(), 1u);
  EXPECT_TRUE(scan_content("0123456789needle", set, "o").empty());
}

TEST(Signatures, BinaryOkSignatures) {
  auto set = parse_signatures("x\tinjector\tlow\tbinary_ok\tMZ\\x90\td\ny\twebshell\tlow\t-\tMZ\td\n");
  std::string bin("MZ\x90\0\0", 5);
  auto hits = scan_content(as_bytes(bin), set, "o", true);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].signature_id, "x");
}
