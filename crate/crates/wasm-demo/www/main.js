import init, { simulate_csv, biplot_svg, ci_forest_svg, cv_votes_svg } from "./pkg/plscore_wasm.js";

const $ = (id) => document.getElementById(id);
const int = (id) => parseInt($(id).value, 10);

function show(fn) {
  $("status").textContent = "";
  // let the status clear paint before a long computation
  setTimeout(() => {
    try {
      $("figure").innerHTML = fn();
    } catch (e) {
      $("status").textContent = String(e);
    }
  }, 0);
}

const data = () => [$("csv").value, $("response").value, $("family").value];

function simulate() {
  try {
    $("csv").value = simulate_csv(int("n"), int("p"), $("family").value, parseFloat($("miss").value), int("seed"));
    $("response").value = "y";
    $("status").textContent = "";
  } catch (e) {
    $("status").textContent = String(e);
  }
}

await init();

$("simulate").onclick = simulate;
$("file").onchange = async (ev) => {
  const f = ev.target.files[0];
  if (f) $("csv").value = await f.text();
};
$("run-biplot").onclick = () => show(() => biplot_svg(...data(), int("bi-h")));
$("run-ci").onclick = () =>
  show(() => ci_forest_svg(...data(), int("ci-h"), $("scheme").value, int("B"), $("ci").value, int("seed")));
$("run-cv").onclick = () =>
  show(() => cv_votes_svg(...data(), int("cv-h"), int("k"), int("repeats"), $("rule").value, int("seed")));

simulate();
