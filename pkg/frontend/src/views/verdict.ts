import { el, statusLine } from '../dom';
import type { AppContext } from '../main';
import { FAILURE_VERDICTS, type VerdictKind } from '../types';

export function renderVerdict(root: HTMLElement, ctx: AppContext): void {
  const messages = el('div');
  const submit = el('button', { className: 'primary', textContent: 'Generate my questions' });
  submit.dataset.testid = 'verdict-submit';

  // Outcome first; the concrete failure kinds unlock only for "failing".
  const passedRadio = el('input', { type: 'radio', name: 'outcome', value: 'passed' });
  passedRadio.dataset.testid = 'outcome-passed';
  const failedRadio = el('input', { type: 'radio', name: 'outcome', value: 'failed' });
  failedRadio.dataset.testid = 'outcome-failed';

  const failureRadios: HTMLInputElement[] = FAILURE_VERDICTS.map((kind) => {
    const radio = el('input', { type: 'radio', name: 'failure-kind', value: kind, disabled: true });
    radio.dataset.testid = `verdict-${kind}`;
    return radio;
  });

  function syncFailureKinds(): void {
    const failing = failedRadio.checked;
    for (const radio of failureRadios) {
      radio.disabled = !failing;
      if (!failing) radio.checked = false;
    }
  }
  passedRadio.addEventListener('change', syncFailureKinds);
  failedRadio.addEventListener('change', syncFailureKinds);

  submit.addEventListener('click', async () => {
    messages.textContent = '';
    let verdict: VerdictKind | null = null;
    if (passedRadio.checked) {
      verdict = 'AllPassed';
    } else if (failedRadio.checked) {
      verdict = (failureRadios.find((r) => r.checked)?.value as VerdictKind) ?? null;
    }
    if (!verdict) {
      messages.append(statusLine('error', 'Pick the verdict your submission received.'));
      return;
    }
    submit.disabled = true;
    messages.append(statusLine('info', 'Generating questions…'));
    try {
      await ctx.api.declareVerdict(ctx.sessionId!, verdict);
      await ctx.navigate(`#/s/${ctx.sessionId}/answering`);
    } catch (err) {
      submit.disabled = false;
      messages.textContent = '';
      messages.append(statusLine('error', `${String(err)} — submit again to retry.`));
    }
  });

  root.append(
    el('h1', { textContent: 'How did the judge rule?' }),
    el('fieldset', {}, [
      el('legend', { textContent: 'Outcome' }),
      el('label', {}, [passedRadio, ' Passed all test cases']),
      el('label', {}, [failedRadio, ' Failed some or all test cases']),
    ]),
    el('fieldset', {}, [
      el('legend', { textContent: 'Failure verdict' }),
      ...failureRadios.map((radio, i) =>
        el('label', {}, [radio, ` ${FAILURE_VERDICTS[i]}`]),
      ),
    ]),
    submit,
    messages,
  );
}
