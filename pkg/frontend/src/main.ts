/**
 * The threshold console: upload a neuron's two channels and traces, drag
 * the red/green threshold sliders against a live preview, run the count,
 * and inspect the per-dendrite table.
 *
 * All numbers shown are lifted from server responses; the console does no
 * counting or thresholding arithmetic of its own.
 */

import {
  ApiClient,
  ApiError,
  type AnalysisMode,
  type SessionConfig,
} from "./api";
import { PreviewLoop } from "./preview";
import { clampThreshold, createInitialState, type UiSessionState } from "./state";
import { csvDataUrl, tableRows, tableToCsv } from "./table";

const TEMPLATE = `
<div class="console">
  <div id="banner" class="banner" hidden></div>

  <form id="upload-form" novalidate>
    <fieldset>
      <legend>Neuron</legend>
      <label>Red channel (TIFF)
        <input type="file" id="red-file" accept=".tif,.tiff" />
        <span class="field-error" id="red-error"></span>
      </label>
      <label>Green channel (TIFF)
        <input type="file" id="green-file" accept=".tif,.tiff" />
        <span class="field-error" id="green-error"></span>
      </label>
      <label>Dendrite traces (NDF or JSON)
        <input type="file" id="traces-file" accept=".ndf,.json,.txt" />
        <span class="field-error" id="traces-error"></span>
      </label>
    </fieldset>
    <fieldset>
      <legend>Calibration</legend>
      <label>Scale (um/pixel)
        <input type="number" id="scale" step="any" value="0.09" />
        <span class="field-error" id="scale-error"></span>
      </label>
      <label>Dendrite thickness (um)
        <input type="number" id="thickness" step="any" value="1.0" />
        <span class="field-error" id="thickness-error"></span>
      </label>
      <span class="field-error" id="config-error"></span>
    </fieldset>
    <button type="submit" id="upload-button">Start session</button>
  </form>

  <section id="session-panel" hidden>
    <h2>Dendrites</h2>
    <ul id="dendrite-list"></ul>

    <h2>Thresholds</h2>
    <div class="sliders">
      <label>Red &ge; <output id="tr-value">128</output>
        <input type="range" id="tr-slider" min="0" max="255" value="128" />
      </label>
      <label>Green &ge; <output id="tg-value">128</output>
        <input type="range" id="tg-slider" min="0" max="255" value="128" />
      </label>
      <label>Mode
        <select id="mode">
          <option value="per-dendrite" selected>per-dendrite</option>
          <option value="global">global</option>
        </select>
      </label>
      <button type="button" id="analyze-button">Count synapses</button>
    </div>

    <div class="images">
      <figure>
        <img id="preview" alt="candidate preview" />
        <figcaption>Live preview (candidates in red)</figcaption>
      </figure>
      <figure id="marks-figure" hidden>
        <img id="marks" alt="counted synapses" />
        <figcaption>Counted synapses (blue crosses)</figcaption>
      </figure>
    </div>

    <section id="results-section" hidden>
      <h2>Results</h2>
      <table id="results">
        <thead>
          <tr><th>dendrite</th><th>length (um)</th><th>synapses</th><th>per 100 um</th></tr>
        </thead>
        <tbody></tbody>
      </table>
      <a id="csv-link" download="synapse_counts.csv">Download CSV</a>
      <ul id="warnings"></ul>
    </section>
  </section>
</div>
`;

export interface ConsoleElements {
  banner: HTMLElement;
  form: HTMLFormElement;
  redFile: HTMLInputElement;
  greenFile: HTMLInputElement;
  tracesFile: HTMLInputElement;
  scale: HTMLInputElement;
  thickness: HTMLInputElement;
  sessionPanel: HTMLElement;
  dendriteList: HTMLUListElement;
  trSlider: HTMLInputElement;
  tgSlider: HTMLInputElement;
  trValue: HTMLOutputElement;
  tgValue: HTMLOutputElement;
  mode: HTMLSelectElement;
  analyzeButton: HTMLButtonElement;
  preview: HTMLImageElement;
  marksFigure: HTMLElement;
  marks: HTMLImageElement;
  resultsSection: HTMLElement;
  resultsBody: HTMLTableSectionElement;
  csvLink: HTMLAnchorElement;
  warnings: HTMLUListElement;
}

export interface ThresholdConsole {
  state: UiSessionState;
  elements: ConsoleElements;
  previewLoop: PreviewLoop;
  /** submit the upload form programmatically (same path as the submit event) */
  upload(): Promise<void>;
  /** run the count with the current thresholds and mode */
  analyze(): Promise<void>;
}

const FIELD_PREFIXES: Record<string, string> = {
  red: "red-error",
  green: "green-error",
  traces: "traces-error",
  config: "config-error",
};

function query<T extends Element>(root: HTMLElement, selector: string): T {
  const el = root.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
}

function toObjectUrl(blob: Blob): string {
  // jsdom lacks createObjectURL; tests stub it or tolerate the empty URL
  return typeof URL.createObjectURL === "function" ? URL.createObjectURL(blob) : "";
}

export function initConsole(
  root: HTMLElement,
  api: ApiClient = new ApiClient(),
): ThresholdConsole {
  root.innerHTML = TEMPLATE;
  const elements: ConsoleElements = {
    banner: query(root, "#banner"),
    form: query(root, "#upload-form"),
    redFile: query(root, "#red-file"),
    greenFile: query(root, "#green-file"),
    tracesFile: query(root, "#traces-file"),
    scale: query(root, "#scale"),
    thickness: query(root, "#thickness"),
    sessionPanel: query(root, "#session-panel"),
    dendriteList: query(root, "#dendrite-list"),
    trSlider: query(root, "#tr-slider"),
    tgSlider: query(root, "#tg-slider"),
    trValue: query(root, "#tr-value"),
    tgValue: query(root, "#tg-value"),
    mode: query(root, "#mode"),
    analyzeButton: query(root, "#analyze-button"),
    preview: query(root, "#preview"),
    marksFigure: query(root, "#marks-figure"),
    marks: query(root, "#marks"),
    resultsSection: query(root, "#results-section"),
    resultsBody: query(root, "#results tbody"),
    csvLink: query(root, "#csv-link"),
    warnings: query(root, "#warnings"),
  };

  const state = createInitialState();
  let previewObjectUrl: string | null = null;

  const showBanner = (text: string) => {
    elements.banner.textContent = text;
    elements.banner.hidden = false;
  };
  const clearBanner = () => {
    elements.banner.textContent = "";
    elements.banner.hidden = true;
  };
  const clearFieldErrors = () => {
    for (const el of root.querySelectorAll<HTMLElement>(".field-error")) {
      el.textContent = "";
    }
  };
  const fieldError = (id: string, text: string) => {
    query<HTMLElement>(root, `#${id}`).textContent = text;
  };

  const previewLoop = new PreviewLoop(
    (tr, tg) => {
      if (!state.sessionId) return Promise.reject(new Error("no session"));
      return api.fetchPreview(state.sessionId, tr, tg);
    },
    ({ blob }) => {
      if (previewObjectUrl) URL.revokeObjectURL(previewObjectUrl);
      previewObjectUrl = toObjectUrl(blob);
      elements.preview.src = previewObjectUrl;
      state.previewUrl = previewObjectUrl;
      clearBanner();
    },
    () => showBanner("preview failed; is the analysis server still running?"),
  );

  const onSlider = () => {
    state.thresholdRed = clampThreshold(Number(elements.trSlider.value));
    state.thresholdGreen = clampThreshold(Number(elements.tgSlider.value));
    elements.trValue.value = String(state.thresholdRed);
    elements.tgValue.value = String(state.thresholdGreen);
    previewLoop.set(state.thresholdRed, state.thresholdGreen);
  };
  elements.trSlider.addEventListener("input", onSlider);
  elements.tgSlider.addEventListener("input", onSlider);
  elements.mode.addEventListener("change", () => {
    state.mode = elements.mode.value as AnalysisMode;
  });

  async function upload(): Promise<void> {
    clearBanner();
    clearFieldErrors();
    const red = elements.redFile.files?.[0];
    const green = elements.greenFile.files?.[0];
    const traces = elements.tracesFile.files?.[0];
    const scale = Number(elements.scale.value);
    const thickness = Number(elements.thickness.value);
    let valid = true;
    if (!red) {
      fieldError("red-error", "choose the red-channel TIFF");
      valid = false;
    }
    if (!green) {
      fieldError("green-error", "choose the green-channel TIFF");
      valid = false;
    }
    if (!traces) {
      fieldError("traces-error", "choose the traces file");
      valid = false;
    }
    if (!(scale > 0)) {
      fieldError("scale-error", "scale must be a positive number");
      valid = false;
    }
    if (!(thickness > 0)) {
      fieldError("thickness-error", "thickness must be a positive number");
      valid = false;
    }
    if (!valid) return; // nothing sent until the form is complete

    const config: SessionConfig = {
      scale,
      thickness,
      threshold_red: state.thresholdRed,
      threshold_green: state.thresholdGreen,
      mode: state.mode,
    };
    let summary;
    try {
      summary = await api.createSession({
        red: red!,
        green: green!,
        traces: traces!,
        config,
      });
    } catch (error) {
      if (error instanceof ApiError) {
        const prefix = error.message.split(":", 1)[0] ?? "";
        const target = FIELD_PREFIXES[prefix];
        if (target) {
          fieldError(target, error.message);
        } else {
          showBanner(error.message);
        }
      } else {
        showBanner("cannot reach the analysis server; your form entries are preserved");
      }
      return;
    }

    state.sessionId = summary.id;
    state.width = summary.width;
    state.height = summary.height;
    state.dendrites = summary.dendrites;
    state.report = null;
    state.reportThresholds = null;
    elements.dendriteList.replaceChildren(
      ...summary.dendrites.map((d) => {
        const item = document.createElement("li");
        item.textContent = `${d.name} (id ${d.id}): ${d.length_um.toFixed(2)} um`;
        return item;
      }),
    );
    elements.sessionPanel.hidden = false;
    elements.resultsSection.hidden = true;
    elements.marksFigure.hidden = true;
    await previewLoop.refreshNow(state.thresholdRed, state.thresholdGreen);
  }

  async function analyze(): Promise<void> {
    if (!state.sessionId) {
      showBanner("start a session first");
      return;
    }
    clearBanner();
    const thresholds = {
      thresholdRed: state.thresholdRed,
      thresholdGreen: state.thresholdGreen,
    };
    let report;
    try {
      report = await api.analyze(state.sessionId, {
        threshold_red: thresholds.thresholdRed,
        threshold_green: thresholds.thresholdGreen,
        mode: state.mode,
      });
    } catch (error) {
      showBanner(error instanceof Error ? error.message : String(error));
      return;
    }
    state.report = report;
    state.reportThresholds = thresholds;

    const rows = tableRows(report);
    elements.resultsBody.replaceChildren(
      ...rows.map((row) => {
        const tr = document.createElement("tr");
        for (const cell of [row.dendrite, row.length_um, row.synapses, row.density_per_100um]) {
          const td = document.createElement("td");
          td.textContent = cell;
          tr.appendChild(td);
        }
        return tr;
      }),
    );
    elements.csvLink.href = csvDataUrl(tableToCsv(rows));
    elements.warnings.replaceChildren(
      ...report.warnings.map((w) => {
        const item = document.createElement("li");
        item.textContent = w;
        return item;
      }),
    );
    elements.marks.src = api.marksUrl(
      state.sessionId,
      thresholds.thresholdRed,
      thresholds.thresholdGreen,
    );
    elements.marksFigure.hidden = false;
    elements.resultsSection.hidden = false;
  }

  elements.form.addEventListener("submit", (event) => {
    event.preventDefault();
    void upload();
  });
  elements.analyzeButton.addEventListener("click", () => {
    void analyze();
  });

  return { state, elements, previewLoop, upload, analyze };
}
