import { el, statusLine } from '../dom';
import type { AppContext } from '../main';
import type { SummaryPayload, SummaryRow } from '../types';
import { createStarWidget } from './stars';

/**
 * The summary table has exactly the three columns Question Title, Score,
 * Feedback; rating widgets live below it, one per answered question, so
 * the table shape stays canonical.
 */
export function renderSummaryTable(rows: SummaryRow[]): HTMLElement {
  if (rows.length === 0) {
    // Unreachable through the API (summaries need >= 1 answer); still handled.
    return el('p', { className: 'empty', textContent: 'No answers were recorded.' });
  }
  const table = el('table', { className: 'summary' });
  table.dataset.testid = 'summary-table';
  table.append(
    el('thead', {}, [
      el('tr', {}, [
        el('th', { textContent: 'Question Title' }),
        el('th', { textContent: 'Score' }),
        el('th', { textContent: 'Feedback' }),
      ]),
    ]),
    el(
      'tbody',
      {},
      rows.map((row) =>
        el('tr', {}, [
          el('td', { textContent: row.question_title }),
          el('td', { textContent: String(row.score) }),
          el('td', { textContent: row.feedback }),
        ]),
      ),
    ),
  );
  return table;
}

export function renderSummary(
  root: HTMLElement,
  ctx: AppContext,
  summary: SummaryPayload,
  answeredIds: string[],
): void {
  root.append(el('h1', { textContent: 'Session summary' }), renderSummaryTable(summary.rows));

  const ratingBlock = el('section', { className: 'ratings' }, [
    el('h2', { textContent: 'How helpful was each question?' }),
  ]);
  summary.rows.forEach((row, index) => {
    const questionId = answeredIds[index];
    if (!questionId) return;
    const line = el('div', { className: 'rating-row' });
    line.dataset.testid = `rating-row-${index}`;
    const widget = createStarWidget(async (stars) => {
      await ctx.api.rateQuestion(questionId, stars, ctx.sessionId ?? undefined);
    });
    line.append(el('span', { textContent: row.question_title }), widget);
    ratingBlock.append(line);
  });
  root.append(ratingBlock);

  const again = el('button', { textContent: 'Start another session' });
  again.addEventListener('click', () => {
    void ctx.navigate('#/');
  });
  root.append(again, el('div', {}, [statusLine('info', 'Your session is saved; this page is safe to refresh.')]));
}
