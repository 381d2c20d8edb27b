import { el, statusLine } from '../dom';
import type { AppContext } from '../main';

export function renderLanding(root: HTMLElement, ctx: AppContext): void {
  const button = el('button', { className: 'primary', textContent: 'Start a reflection session' });
  button.dataset.testid = 'start-session';
  button.addEventListener('click', async () => {
    button.disabled = true;
    try {
      const created = await ctx.api.createSession();
      await ctx.navigate(`#/s/${created.session_id}/upload`);
    } catch (err) {
      button.disabled = false;
      root.append(statusLine('error', String(err)));
    }
  });
  root.append(
    el('h1', { textContent: 'Reflect on your last submission' }),
    el('p', {
      textContent:
        'Upload the problem and your code, tell us the verdict, and work ' +
        'through a short set of questions about your own solution.',
    }),
    button,
  );
}
