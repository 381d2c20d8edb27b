import { el, statusLine } from '../dom';
import type { AppContext } from '../main';

export function renderUpload(root: HTMLElement, ctx: AppContext): void {
  const problemInput = el('input', { type: 'file' });
  problemInput.dataset.testid = 'problem-file';
  const codeInput = el('input', { type: 'file' });
  codeInput.dataset.testid = 'code-file';
  const submit = el('button', { className: 'primary', textContent: 'Upload' });
  submit.dataset.testid = 'upload-submit';
  const messages = el('div');

  submit.addEventListener('click', async () => {
    const problem = problemInput.files?.[0];
    const code = codeInput.files?.[0];
    messages.textContent = '';
    if (!problem || !code) {
      messages.append(statusLine('error', 'Choose both a problem statement and a code file.'));
      return;
    }
    submit.disabled = true;
    try {
      await ctx.api.uploadArtifacts(
        ctx.sessionId!,
        { name: problem.name || 'problem.txt', content: problem },
        { name: code.name || 'solution.txt', content: code },
      );
      await ctx.navigate(`#/s/${ctx.sessionId}/verdict`);
    } catch (err) {
      submit.disabled = false;
      messages.append(statusLine('error', String(err)));
    }
  });

  root.append(
    el('h1', { textContent: 'Upload your submission' }),
    el('label', {}, ['Problem statement: ', problemInput]),
    el('label', {}, ['Your code: ', codeInput]),
    submit,
    messages,
  );
}
