import { ApiClient, ApiError } from './api';
import { clear, el, statusLine } from './dom';
import { flowGuard, VIEW_FOR_STEP, type View } from './flowGuard';
import { renderAnswering } from './views/answering';
import { renderLanding } from './views/landing';
import { renderSummary } from './views/summary';
import { renderUpload } from './views/upload';
import { renderVerdict } from './views/verdict';

export interface AppContext {
  api: ApiClient;
  sessionId: string | null;
  navigate: (hash: string) => Promise<void>;
}

interface Route {
  view: View;
  sessionId: string | null;
}

export function parseHash(hash: string): Route {
  const match = /^#\/s\/([A-Za-z0-9-]+)\/(upload|verdict|answering|summary)$/.exec(hash);
  if (match) {
    return { view: match[2] as View, sessionId: match[1]! };
  }
  return { view: 'landing', sessionId: null };
}

export interface App {
  navigate: (hash: string) => Promise<void>;
  currentHash: () => string;
}

/**
 * Hash-routed single-page app. All state round-trips through the API:
 * every navigation re-fetches the session, so a refresh at any step
 * restores the same view, and deep links are clamped to the persisted
 * step by the flow guard.
 */
export function createApp(root: HTMLElement, api: ApiClient): App {
  let hash = '#/';

  async function navigate(nextHash: string): Promise<void> {
    hash = nextHash || '#/';
    const route = parseHash(hash);
    clear(root);

    if (route.view === 'landing' || !route.sessionId) {
      renderLanding(root, { api, sessionId: null, navigate });
      return;
    }

    let state;
    try {
      state = await api.getState(route.sessionId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        hash = '#/';
        renderLanding(root, { api, sessionId: null, navigate });
        return;
      }
      root.append(statusLine('error', String(err)));
      return;
    }

    const guard = flowGuard(state.step, route.view);
    if ('redirect' in guard) {
      await navigate(`#/s/${route.sessionId}/${guard.redirect}`);
      return;
    }

    const ctx: AppContext = { api, sessionId: route.sessionId, navigate };
    if (route.view === 'upload') {
      renderUpload(root, ctx);
    } else if (route.view === 'verdict') {
      renderVerdict(root, ctx);
    } else if (route.view === 'answering') {
      const questions = state.questions ?? (await api.getQuestions(route.sessionId));
      renderAnswering(root, ctx, questions);
    } else {
      const summary = await api.finalizeSummary(route.sessionId); // idempotent fetch
      const questions = state.questions ?? (await api.getQuestions(route.sessionId));
      renderSummary(root, ctx, summary, Object.keys(questions.answered));
    }
  }

  return { navigate, currentHash: () => hash };
}

export function bootstrap(): void {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app element');
  const app = createApp(root, new ApiClient(''));
  const sync = () => {
    void app.navigate(window.location.hash);
  };
  window.addEventListener('hashchange', sync);
  sync();
}

export { VIEW_FOR_STEP };
