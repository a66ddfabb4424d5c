#include <gtest/gtest.h>

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>

#include "fixtures.hpp"
#include "operator.hpp"
#include "hostguard/access_rules.hpp"
#include "hostguard/error.hpp"
#include "hostguard/hardening.hpp"

using namespace hostguard;
using namespace hostguard::hardening;

using hgtest::apply_chmods;
using hgtest::apply_overrides;
using hgtest::make_mode_tree;

namespace {

fs::path fixture_dir() { return hgtest::data_dir() / "hardening" / "nonconforming"; }

policy fixture_policy() {
  return parse_policy(hgtest::slurp(fixture_dir() / "policy.ini"), fixture_dir());
}

std::set<std::string> ids(const std::vector<finding>& fs) {
  std::set<std::string> out;
  for (const auto& f : fs) out.insert(f.finding_id);
  return out;
}

const finding& by_id(const std::vector<finding>& fs, const std::string& id) {
  auto it = std::find_if(fs.begin(), fs.end(), [&](const auto& f) { return f.finding_id == id; });
  if (it == fs.end()) throw std::runtime_error("no finding " + id);
  return *it;
}

}  // namespace

// ---------------------------------------------------------------------------
// runtime config
// ---------------------------------------------------------------------------
TEST(HardeningRuntime, EmptyDisableListFlagsEveryBannedFunction) {
  policy p;
  p.finalize();
  auto fs = audit_runtime_config("disable_functions =\nallow_url_include = Off\n", p);
  EXPECT_EQ(ids(fs), (std::set<std::string>{"runtime.disable_functions:shell_exec", "runtime.disable_functions:popen",
                                             "runtime.disable_functions:proc_open", "runtime.disable_functions:exec",
                                             "runtime.disable_functions:passthru", "runtime.disable_functions:system"}));
  for (const auto& f : fs) {
    EXPECT_TRUE(f.remediable);
    EXPECT_EQ(f.cat, category::runtime_config);
  }
}

TEST(HardeningRuntime, CompliantConfigIsClean) {
  policy p;
  p.finalize();
  EXPECT_TRUE(audit_runtime_config(hgtest::slurp(hgtest::data_dir() / "hardening" / "conforming" / "php.ini"), p).empty());
  EXPECT_TRUE(audit_runtime_config(
                  "disable_functions = system, PASSTHRU ,exec,proc_open,popen,shell_exec\nallow_url_include=0\n", p)
                  .empty());
}

TEST(HardeningRuntime, SessionLifetimeAndDirectives) {
  policy p;
  p.finalize();
  std::string base = "disable_functions = shell_exec,popen,proc_open,exec,passthru,system\nallow_url_include = Off\n";
  auto fs = audit_runtime_config(base + "session.gc_maxlifetime = 86400\n", p);
  ASSERT_EQ(fs.size(), 1u);
  EXPECT_EQ(fs[0].cat, category::session);
  EXPECT_EQ(fs[0].observed, "86400");
  EXPECT_EQ(fs[0].expected, "1440");
  EXPECT_TRUE(audit_runtime_config(base + "session.gc_maxlifetime = 1440\n", p).empty());

  auto on = audit_runtime_config(base + "display_errors = On\n", p);
  EXPECT_EQ(ids(on), std::set<std::string>{"runtime.directive:display_errors"});

  // Unset allow_url_include is a finding: the directive must be explicitly Off.
  auto unset = audit_runtime_config("disable_functions = shell_exec,popen,proc_open,exec,passthru,system\n", p);
  ASSERT_EQ(unset.size(), 1u);
  EXPECT_EQ(unset[0].finding_id, "runtime.directive:allow_url_include");
  EXPECT_EQ(unset[0].level, severity::critical);
}

TEST(HardeningRuntime, ParseErrorsCarryLine) {
  policy p;
  p.finalize();
  try {
    audit_runtime_config("a = 1\nbroken line\n", p);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::config_parse_error);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(audit_runtime_config("session.gc_maxlifetime = soon\n", p), error);
}

// ---------------------------------------------------------------------------
// filesystem
// ---------------------------------------------------------------------------
TEST(HardeningFilesystem, ScriptedModesMatchFindings) {
  hgtest::temp_dir d;
  auto expected = make_mode_tree(d.path());
  policy p;
  p.finalize();
  auto fs = audit_filesystem(d.path(), p);
  EXPECT_EQ(ids(fs), expected);
  EXPECT_EQ(by_id(fs, "perm.file:wp-config.php").level, severity::critical);
  EXPECT_EQ(by_id(fs, "perm.file:wp-config.php").expected, "644");
  EXPECT_EQ(by_id(fs, "perm.dir:uploads").level, severity::critical);
  EXPECT_EQ(by_id(fs, "perm.dir:uploads").expected, "755");
  EXPECT_EQ(by_id(fs, "perm.dir:uploads").subject, "uploads/");
  EXPECT_EQ(by_id(fs, "perm.dir:includes").level, severity::high);
  EXPECT_EQ(by_id(fs, "perm.dir:cache").level, severity::medium);
}

TEST(HardeningFilesystem, ConformingTreeIsClean) {
  hgtest::temp_dir d;
  hgtest::make_benign_tree(d.path(), 9, 60, 10);
  ::chmod(d.path().c_str(), 0755);
  policy p;
  p.finalize();
  EXPECT_TRUE(audit_filesystem(d.path(), p).empty());
  try {
    audit_filesystem(d / "missing", p);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::root_not_found);
  }
}

// ---------------------------------------------------------------------------
// credentials
// ---------------------------------------------------------------------------
TEST(HardeningCredentials, Examples) {
  policy p;
  p.finalize();
  auto admin = audit_credentials(R"({"account":"admin","password":"123456","realm":"wp"})", p);
  EXPECT_EQ(ids(admin), (std::set<std::string>{"cred.username:admin@wp", "cred.weak_password:admin@wp"}));
  EXPECT_TRUE(audit_credentials(R"({"account":"ops-rhw","password":"Vq8#tZ2m!Lp4@xR7$wN9"})", p).empty());
  auto root = audit_credentials(R"({"account":"root","hash":"$2y$10$abcdefghijklmnopqrstuv"})", p);
  EXPECT_EQ(ids(root), std::set<std::string>{"cred.username:root"});
  for (const auto& f : admin) EXPECT_FALSE(f.remediable);
}

TEST(HardeningCredentials, EntropyMatchesPoolFormula) {
  EXPECT_DOUBLE_EQ(password_entropy_bits(""), 0.0);
  EXPECT_DOUBLE_EQ(password_entropy_bits("kitten"), 6 * std::log2(26.0));
  EXPECT_DOUBLE_EQ(password_entropy_bits("Kitten1"), 7 * std::log2(62.0));
  EXPECT_DOUBLE_EQ(password_entropy_bits("a!"), 2 * std::log2(59.0));
}

TEST(HardeningCredentials, MalformedDocuments) {
  policy p;
  p.finalize();
  for (std::string bad : {"not json", R"({"password":"x"})", R"({"account":"a"})",
                          R"({"account":"a","password":"x","hash":"y"})", R"({"account":"a","password":5})"}) {
    try {
      audit_credentials(bad, p);
      ADD_FAILURE() << bad;
    } catch (const error& e) {
      EXPECT_EQ(e.code(), errc::cred_doc_parse_error);
    }
  }
  EXPECT_TRUE(audit_credentials("# comment\n\n", p).empty());
}

// ---------------------------------------------------------------------------
// policy
// ---------------------------------------------------------------------------
TEST(HardeningPolicy, ParseAndValidate) {
  auto p = fixture_policy();
  EXPECT_TRUE(p.weak_passwords.count("correcthorsebatterystaple"));
  EXPECT_FALSE(p.weak_passwords.count("qwerty"));  // the file replaces the builtin list
  EXPECT_EQ(p.max_file_mode, 0644u);
  EXPECT_THROW(parse_policy("[hardening]\nmax_file_mode = 999\n"), error);
  EXPECT_THROW(parse_policy("[hardening]\nbanned_functions =\n"), error);
  EXPECT_THROW(parse_policy("[hardening]\nfrobnicate = 1\n"), error);
  EXPECT_THROW(parse_policy("[hardening]\nweak_password_list = /nonexistent/list\n"), error);
  EXPECT_NO_THROW(parse_policy("[gateway]\nanything = 1\n"));
}

// ---------------------------------------------------------------------------
// nonconforming fixture, remediation, idempotence
// ---------------------------------------------------------------------------
TEST(HardeningFixture, EveryPolicyFieldIsExercised) {
  auto p = fixture_policy();
  auto runtime = audit_runtime_config(hgtest::slurp(fixture_dir() / "php.ini"), p);
  auto creds = audit_credentials(hgtest::slurp(fixture_dir() / "credentials.jsonl"), p);
  hgtest::temp_dir d;
  make_mode_tree(d.path());
  auto perms = audit_filesystem(d.path(), p);

  // banned_functions (functions and the directive)
  EXPECT_TRUE(ids(runtime).count("runtime.disable_functions:shell_exec"));
  EXPECT_FALSE(ids(runtime).count("runtime.disable_functions:exec"));
  EXPECT_TRUE(ids(runtime).count("runtime.directive:allow_url_include"));
  // max_session_lifetime
  EXPECT_TRUE(ids(runtime).count("session.gc_maxlifetime"));
  // max_file_mode, max_dir_mode
  EXPECT_TRUE(ids(perms).count("perm.file:wp-config.php"));
  EXPECT_TRUE(ids(perms).count("perm.dir:uploads"));
  // forbidden_usernames
  EXPECT_TRUE(ids(creds).count("cred.username:admin@wordpress"));
  EXPECT_TRUE(ids(creds).count("cred.username:root@mysql"));
  // min_password_entropy_bits: low entropy, not on any list
  EXPECT_TRUE(ids(creds).count("cred.weak_password:editor@wordpress"));
  EXPECT_EQ(by_id(creds, "cred.weak_password:editor@wordpress").level, severity::high);
  // weak_password_list: high entropy but listed
  EXPECT_GT(password_entropy_bits("correcthorsebatterystaple"), 100);
  EXPECT_TRUE(ids(creds).count("cred.weak_password:backup@ftp"));
  EXPECT_EQ(by_id(creds, "cred.weak_password:backup@ftp").level, severity::critical);
  EXPECT_FALSE(ids(creds).count("cred.weak_password:ops-rhw@wordpress"));
}

TEST(HardeningRemediation, OverridesAggregateFunctions) {
  policy p;
  p.finalize();
  auto fs = audit_runtime_config("disable_functions = exec,proc_open,passthru,system\nallow_url_include=Off\n", p);
  auto b = emit_remediation(fs);
  EXPECT_EQ(b.runtime_overrides, "; hostguard runtime overrides\ndisable_functions = popen,shell_exec\n");
  EXPECT_TRUE(b.access_rules.empty());
}

TEST(HardeningRemediation, EmptyFindingsEmptyBundle) {
  auto b = emit_remediation({});
  EXPECT_TRUE(b.runtime_overrides.empty());
  EXPECT_TRUE(b.access_rules.empty());
  EXPECT_TRUE(b.manual_steps.empty());
}

TEST(HardeningRemediation, UploadsDirRulesParseAndForbidScripts) {
  hgtest::temp_dir d;
  make_mode_tree(d.path());
  policy p;
  p.finalize();
  auto b = emit_remediation(audit_filesystem(d.path(), p));
  ASSERT_FALSE(b.access_rules.empty());
  auto doc = access_rules::parse(b.access_rules);
  EXPECT_TRUE(doc.forbids("uploads/shell.php"));
  EXPECT_TRUE(doc.forbids("uploads/a/b/x.PHTML"));
  EXPECT_TRUE(doc.forbids("uploads/run.sh"));
  EXPECT_FALSE(doc.forbids("uploads/cat.jpg"));
  EXPECT_FALSE(doc.forbids("index.php"));
  EXPECT_FALSE(doc.forbids("uploads-old/x.php"));
  EXPECT_TRUE(doc.forbids("cache/x.php5"));
}

TEST(HardeningRemediation, EveryRemediableFindingHasALine) {
  auto p = fixture_policy();
  auto fs = audit_runtime_config(hgtest::slurp(fixture_dir() / "php.ini"), p);
  auto b = emit_remediation(fs);
  for (const auto& f : fs) {
    ASSERT_TRUE(f.remediable);
    EXPECT_NE(b.runtime_overrides.find(f.subject), std::string::npos) << f.finding_id;
  }
  // Deterministic.
  EXPECT_EQ(emit_remediation(fs).runtime_overrides, b.runtime_overrides);
  auto rev = fs;
  std::reverse(rev.begin(), rev.end());
  EXPECT_EQ(emit_remediation(rev).runtime_overrides, b.runtime_overrides);
}

TEST(HardeningRemediation, ApplyingBundleLeavesNoRemediableFindings) {
  auto p = fixture_policy();
  auto config = hgtest::slurp(fixture_dir() / "php.ini");
  hgtest::temp_dir d;
  make_mode_tree(d.path());

  std::vector<finding> all = audit_runtime_config(config, p);
  auto perms = audit_filesystem(d.path(), p);
  auto creds = audit_credentials(hgtest::slurp(fixture_dir() / "credentials.jsonl"), p);
  all.insert(all.end(), perms.begin(), perms.end());
  all.insert(all.end(), creds.begin(), creds.end());
  ASSERT_TRUE(std::any_of(all.begin(), all.end(), [](const auto& f) { return f.remediable; }));
  auto bundle = emit_remediation(all);

  auto patched = apply_overrides(config, bundle.runtime_overrides);
  auto after = audit_runtime_config(patched, p);
  EXPECT_TRUE(after.empty()) << findings_jsonl(after);
  // Functions the site had already disabled stay disabled.
  EXPECT_NE(patched.find("exec"), std::string::npos);

  apply_chmods(d.path(), bundle.manual_steps);
  EXPECT_TRUE(audit_filesystem(d.path(), p).empty());

  // A second round emits nothing new for the runtime document.
  EXPECT_TRUE(emit_remediation(after).runtime_overrides.empty());
}

TEST(HardeningRemediation, ManualStepsCoverNonRemediable) {
  auto p = fixture_policy();
  auto creds = audit_credentials(hgtest::slurp(fixture_dir() / "credentials.jsonl"), p);
  auto b = emit_remediation(creds);
  EXPECT_TRUE(b.runtime_overrides.empty());
  std::size_t cred_steps = 0;
  for (const auto& s : b.manual_steps)
    if (s.rfind("rename", 0) == 0 || s.rfind("set a strong password", 0) == 0) ++cred_steps;
  EXPECT_EQ(cred_steps, creds.size());
  EXPECT_TRUE(std::any_of(b.manual_steps.begin(), b.manual_steps.end(),
                          [](const auto& s) { return s.find("HTTPS") != std::string::npos; }));
}

TEST(HardeningFindings, JsonLines) {
  finding f{"runtime.disable_functions:popen", category::runtime_config, "popen", "enabled", "disabled",
            severity::high, true};
  EXPECT_EQ(findings_jsonl({f}),
            R"({"category":"runtime_config","expected":"disabled","finding_id":"runtime.disable_functions:popen",)"
            R"("observed":"enabled","remediable":true,"severity":"high","subject":"popen"})"
            "\n");
}

// ---------------------------------------------------------------------------
// access rule parser
// ---------------------------------------------------------------------------
TEST(AccessRules, AcceptsCommonDocuments) {
  auto doc = access_rules::parse(R"(# comment
Options -Indexes
DirectoryIndex index.php index.html
<FilesMatch "\.(ini|log|sh)$">
  Require all denied
</FilesMatch>
<IfModule mod_rewrite.c>
  RewriteEngine On
  RewriteCond %{REQUEST_FILENAME} !-f
  RewriteRule ^admin/.*\.php$ - [F,L]
</IfModule>
php_flag display_errors off
)");
  EXPECT_TRUE(doc.forbids("admin/x.php"));
  EXPECT_FALSE(doc.forbids("index.php"));
  auto it = std::find_if(doc.directives.begin(), doc.directives.end(), [](const auto& d) { return d.name == "Require"; });
  ASSERT_NE(it, doc.directives.end());
  EXPECT_EQ(it->blocks, std::vector<std::string>{"filesmatch"});  // section names are case-folded
}

TEST(AccessRules, RejectsMalformed) {
  for (std::string bad : {"<IfModule mod_rewrite.c>\nRewriteEngine On\n", "</IfModule>\n", "Frobnicate on\n",
                          "RewriteRule ^(a - [F]\n", "RewriteRule ^a - [Q]\n", "RewriteEngine\n",
                          "<Directory /var/www>\n</Directory>\n", "RewriteRule \"^a - [F]\n"}) {
    try {
      access_rules::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const error& e) {
      EXPECT_EQ(e.code(), errc::access_rule_parse_error) << bad;
    }
  }
}

TEST(AccessRules, EngineOffMeansNoRewrite) {
  auto doc = access_rules::parse("RewriteEngine Off\nRewriteRule ^x - [F]\n");
  EXPECT_FALSE(doc.forbids("x"));
}
