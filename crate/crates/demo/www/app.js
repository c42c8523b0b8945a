import init, { parse_provisions, search, explore_selection, fixture_rows } from "./pkg/polyvec_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const esc = (s) => String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);

function fail(el, e) {
  el.innerHTML = `<p class="err">${esc(e.message || e)}</p>`;
}

function metricsLine(m) {
  if (!m) return "";
  return `max ${m.max.toFixed(4)} · mean ${m.mean.toFixed(4)} · min ${m.min.toFixed(4)} · std ${m.std_dev.toFixed(4)} · ${m.segments} segments · ${m.total_tokens} tokens`;
}

function runSearch() {
  const out = $("search-out");
  try {
    const r = JSON.parse(search($("q").value, $("method").value, num("s-budget"), num("s-drop"), num("s-min")));
    const rows = r.report.items
      .map((it, i) => `<tr><td class="num">${i + 1}</td><td>${it.tag}</td><td>${esc(it.display_label)}</td><td class="num">${it.token_count}</td><td class="num">${it.similarity.toFixed(4)}</td></tr>`)
      .join("");
    out.innerHTML = `<p>${esc(r.method)}: embedded <em>${esc(r.report.effective_query)}</em></p>
      <table><tr><th>#</th><th>tag</th><th>unit</th><th>tokens</th><th>sim</th></tr>${rows}</table>
      <p>${metricsLine(r.report.metrics)}</p><details><summary>prompt</summary><pre>${esc(r.prompt)}</pre></details>`;
  } catch (e) {
    fail(out, e);
  }
}

function runSelection() {
  const out = $("sel-out");
  try {
    const cands = JSON.parse($("cands").value);
    const r = JSON.parse(explore_selection($("cands").value, num("x-budget"), num("x-drop"), num("x-min")));
    let total = 0;
    const rows = cands
      .map(([s, t], i) => {
        const before = total;
        if (i < r.selected) total += t;
        return `<tr class="${i < r.selected ? "" : "cut"}"><td class="num">${i + 1}</td><td class="num">${s.toFixed(4)}</td><td class="num">${t}</td><td class="num">${before}</td></tr>`;
      })
      .join("");
    const thr = r.threshold == null ? "" : ` threshold ${r.threshold.toFixed(4)}.`;
    out.innerHTML = `<p>${r.selected} selected.${thr}</p>
      <table><tr><th>#</th><th>sim</th><th>tokens</th><th>tokens before</th></tr>${rows}</table><p>${metricsLine(r.metrics)}</p>`;
  } catch (e) {
    fail(out, e);
  }
}

function runParse() {
  const out = $("parse-out");
  try {
    const r = JSON.parse(parse_provisions($("src").value));
    const rows = r.units
      .map((u) => `<tr><td style="padding-left:${u.depth * 14 + 6}px">${esc(u.label)}</td><td>${u.kind}</td><td><code>${esc(u.urn)}</code></td><td class="num">${u.tokens}</td></tr>`)
      .join("");
    const warn = r.warnings.map((w) => `<li>line ${w.line}: ${esc(w.message)}</li>`).join("");
    out.innerHTML = `${warn ? `<ul class="err">${warn}</ul>` : ""}
      <table><tr><th>unit</th><th>kind</th><th>urn</th><th>tokens</th></tr>${rows}</table>`;
  } catch (e) {
    fail(out, e);
  }
}

await init();

const names = { a: "Blind", b: "Flat", c: "Multi-layer", d: "Multi-layer+Norm", e: "Poly+Blind", f: "Poly+Flat", g: "Poly+Multi-layer", h: "Poly+Multi-layer+Norm" };
for (const [id, name] of Object.entries(names)) {
  $("method").add(new Option(`(${id}) ${name}`, id, false, id === "g"));
}

const fixture = JSON.parse(fixture_rows()).rows;
fixture.forEach((row, i) => $("preset").add(new Option(`${row.question} (${row.method}) ${row.method_name}`, i)));
$("preset").addEventListener("change", (ev) => {
  if (ev.target.value === "") return;
  const row = fixture[Number(ev.target.value)];
  $("cands").value = JSON.stringify(row.items.map((it) => [it.similarity, it.tokens]));
  runSelection();
});

$("go").addEventListener("click", runSearch);
$("q").addEventListener("keydown", (ev) => ev.key === "Enter" && runSearch());
$("parse").addEventListener("click", runParse);
for (const id of ["cands", "x-budget", "x-drop", "x-min"]) $(id).addEventListener("input", runSelection);
runSelection();
