/**
 * Results table: rows come verbatim from the analyze response; the only
 * processing here is display formatting and CSV re-serialization.
 */

import type { AnalyzeResponse, ResultRow } from "./api";

export interface TableRow {
  dendrite: string;
  length_um: string;
  synapses: string;
  density_per_100um: string;
}

function label(row: ResultRow): string {
  return row.dendrite_id === "all" ? "all" : `d${row.dendrite_id}`;
}

export function tableRows(report: AnalyzeResponse): TableRow[] {
  const rows = [...report.per_dendrite, report.global];
  return rows.map((row) => ({
    dendrite: label(row),
    length_um: row.length_um.toFixed(2),
    synapses: String(row.synapse_count),
    density_per_100um:
      row.density_per_100um === null ? "NA" : row.density_per_100um.toFixed(2),
  }));
}

function csvField(value: string): string {
  return /[",\n]/.test(value) ? `"${value.replace(/"/g, '""')}"` : value;
}

export function tableToCsv(rows: TableRow[]): string {
  const header = "dendrite,length_um,synapses,density_per_100um";
  const lines = rows.map((row) =>
    [row.dendrite, row.length_um, row.synapses, row.density_per_100um]
      .map(csvField)
      .join(","),
  );
  return [header, ...lines].join("\n") + "\n";
}

export function csvDataUrl(csv: string): string {
  return "data:text/csv;charset=utf-8," + encodeURIComponent(csv);
}
