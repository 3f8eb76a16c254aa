// End-of-session report rendering: confusion table plus fooling rates.
// Every leaf of the backend report JSON appears in the DOM with a
// data-field path and its exact value in data-value.

import { Report } from './api.js';

export type Leaf = [path: string, value: number | null];

/** Flatten a report into (dot-path, value) leaves in a stable order. */
export function reportLeaves(report: Report): Leaf[] {
  const leaves: Leaf[] = [["rated", report.rated]];
  for (const domain of Object.keys(report.confusion).sort()) {
    const byTruth = report.confusion[domain]!;
    for (const truth of Object.keys(byTruth).sort()) {
      const byJudgment = byTruth[truth]!;
      for (const judgment of Object.keys(byJudgment).sort()) {
        leaves.push([`confusion.${domain}.${truth}.${judgment}`, byJudgment[judgment]!]);
      }
    }
  }
  for (const domain of Object.keys(report.fooling_rate_by_domain).sort()) {
    leaves.push([`fooling_rate_by_domain.${domain}`, report.fooling_rate_by_domain[domain]!]);
  }
  for (const model of Object.keys(report.fooling_rate_by_model).sort()) {
    leaves.push([`fooling_rate_by_model.${model}`, report.fooling_rate_by_model[model]!]);
  }
  leaves.push(['fooling_rate_overall', report.fooling_rate_overall]);
  leaves.push(['accuracy', report.accuracy]);
  return leaves;
}

export function formatValue(value: number | null): string {
  if (value === null) return 'n/a';
  if (Number.isInteger(value)) return String(value);
  return value.toFixed(3);
}

function cell(tag: string, text: string, field?: string, value?: number | null): HTMLElement {
  const el = document.createElement(tag);
  el.textContent = text;
  if (field !== undefined) {
    el.setAttribute('data-field', field);
    el.setAttribute('data-value', value === null ? 'null' : String(value));
  }
  return el;
}

function confusionTable(report: Report): HTMLElement {
  const table = document.createElement('table');
  table.className = 'confusion';
  const head = table.createTHead().insertRow();
  for (const text of ['domain', 'truth', 'judged real', 'judged synthetic']) {
    head.appendChild(cell('th', text));
  }
  const body = table.createTBody();
  for (const domain of Object.keys(report.confusion).sort()) {
    const byTruth = report.confusion[domain]!;
    for (const truth of Object.keys(byTruth).sort()) {
      const row = body.insertRow();
      row.appendChild(cell('td', domain));
      row.appendChild(cell('td', truth));
      for (const judgment of ['real', 'synthetic']) {
        const count = byTruth[truth]![judgment] ?? 0;
        row.appendChild(
          cell('td', String(count), `confusion.${domain}.${truth}.${judgment}`, count),
        );
      }
    }
  }
  return table;
}

function ratesTable(report: Report): HTMLElement {
  const table = document.createElement('table');
  table.className = 'rates';
  const head = table.createTHead().insertRow();
  head.appendChild(cell('th', 'fooling rate'));
  head.appendChild(cell('th', 'value'));
  const body = table.createTBody();
  const addRow = (label: string, field: string, value: number | null) => {
    const row = body.insertRow();
    row.appendChild(cell('td', label));
    row.appendChild(cell('td', formatValue(value), field, value));
  };
  for (const domain of Object.keys(report.fooling_rate_by_domain).sort()) {
    addRow(
      `domain ${domain}`,
      `fooling_rate_by_domain.${domain}`,
      report.fooling_rate_by_domain[domain]!,
    );
  }
  for (const model of Object.keys(report.fooling_rate_by_model).sort()) {
    addRow(
      `model ${model}`,
      `fooling_rate_by_model.${model}`,
      report.fooling_rate_by_model[model]!,
    );
  }
  addRow('overall', 'fooling_rate_overall', report.fooling_rate_overall);
  return table;
}

export function renderReport(report: Report): HTMLElement {
  const container = document.createElement('div');
  container.className = 'report';

  const heading = document.createElement('h2');
  heading.textContent = 'Session report';
  container.appendChild(heading);

  const summary = document.createElement('p');
  summary.append('Rated items: ');
  summary.appendChild(cell('span', String(report.rated), 'rated', report.rated));
  summary.append(' — accuracy: ');
  summary.appendChild(cell('span', formatValue(report.accuracy), 'accuracy', report.accuracy));
  container.appendChild(summary);

  container.appendChild(confusionTable(report));
  container.appendChild(ratesTable(report));
  return container;
}
